//! Truncated Fock-space linear algebra.
//!
//! Everything here lives on the span of `|0⟩ … |dim−1⟩`. Kets and density
//! matrices are plain value types; operations return new values.

mod displacement;
mod fidelity;
pub mod random;
mod state;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, cabs, cr, czero, norm_sqr, Real, C};

pub use displacement::{
    apply_displacement, displacement, expm, truncation_leakage, Displacer, TruncationWarning,
    TRUNCATION_LEAKAGE_LIMIT,
};
pub use fidelity::{fidelity_general, fidelity_pure};
pub use state::CavityState;

/// Number of retained Fock levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockSpace {
    dim: usize,
}

impl FockSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "Fock space needs at least 2 levels, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The two highest levels, where truncation artifacts first show up.
    pub fn edge_levels(&self) -> [usize; 2] {
        [self.dim - 2, self.dim - 1]
    }

    pub(crate) fn check(&self, actual: usize) -> Result<()> {
        if actual != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual,
            });
        }
        Ok(())
    }
}

impl TryFrom<usize> for FockSpace {
    type Error = Error;

    fn try_from(dim: usize) -> Result<Self> {
        Self::new(dim)
    }
}

impl From<FockSpace> for usize {
    fn from(space: FockSpace) -> usize {
        space.dim
    }
}

/// Pure cavity state `|ψ⟩` as a column of Fock amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket<T: Real> {
    amps: DVector<C<T>>,
}

impl<T: Real> Ket<T> {
    pub fn from_vector(amps: DVector<C<T>>) -> Result<Self> {
        FockSpace::new(amps.len())?;
        Ok(Self { amps })
    }

    pub fn basis(space: FockSpace, n: usize) -> Result<Self> {
        if n >= space.dim() {
            return Err(Error::InvalidParameter(format!(
                "level {n} outside a {}-level space",
                space.dim()
            )));
        }
        let mut amps = DVector::from_element(space.dim(), czero());
        amps[n] = cr(T::one());
        Ok(Self { amps })
    }

    /// Builds `Σ c_n |n⟩` from sparse `(n, c_n)` pairs and normalizes it.
    pub fn from_components(space: FockSpace, components: &[(usize, C<T>)]) -> Result<Self> {
        let mut amps = DVector::from_element(space.dim(), czero());
        for &(n, amp) in components {
            if n >= space.dim() {
                return Err(Error::InvalidParameter(format!(
                    "level {n} outside a {}-level space",
                    space.dim()
                )));
            }
            amps[n] += amp;
        }
        let mut ket = Self { amps };
        ket.normalize()?;
        Ok(ket)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn space(&self) -> FockSpace {
        FockSpace { dim: self.dim() }
    }

    #[inline]
    pub fn amplitudes(&self) -> &DVector<C<T>> {
        &self.amps
    }

    #[inline]
    pub(crate) fn amplitudes_mut(&mut self) -> &mut DVector<C<T>> {
        &mut self.amps
    }

    pub fn norm_squared(&self) -> T {
        self.amps.iter().fold(T::zero(), |acc, &z| acc + norm_sqr(z))
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "cannot normalize a ket of norm {norm}"
            )));
        }
        let inv = T::one() / norm;
        self.amps.iter_mut().for_each(|z| *z = z.scale(inv));
        Ok(())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket<T>) -> C<T> {
        self.amps.dotc(&other.amps)
    }

    pub fn populations(&self) -> Vec<T> {
        self.amps.iter().map(|&z| norm_sqr(z)).collect()
    }

    pub fn mean_photon(&self) -> T {
        self.amps
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (n, &z)| acc + T::lit(n as f64) * norm_sqr(z))
    }

    /// Fock levels whose population exceeds `tol`.
    pub fn support(&self, tol: T) -> Vec<usize> {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, &z)| norm_sqr(z) > tol)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn projector(&self) -> DensityMatrix<T> {
        DensityMatrix {
            m: &self.amps * self.amps.adjoint(),
        }
    }

    pub fn apply(&self, op: &Operator<T>) -> Ket<T> {
        Ket {
            amps: &op.m * &self.amps,
        }
    }

    /// True when every amplitude is real up to one global phase.
    pub fn is_real_up_to_phase(&self, tol: T) -> bool {
        let Some(lead) = self.amps.iter().copied().find(|z| norm_sqr(*z) > tol * tol) else {
            return true;
        };
        let phase = lead.unscale(cabs(lead)).conj();
        self.amps.iter().all(|&z| (z * phase).im.abs() <= tol)
    }
}

/// Hermitian, trace-one matrix on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    m: DMatrix<C<T>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Wraps a matrix, re-Hermitizing and renormalizing it. Positivity is not
    /// checked here; see [`DensityMatrix::validate`].
    pub fn from_matrix(m: DMatrix<C<T>>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "density matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        FockSpace::new(m.nrows())?;
        let mut rho = Self { m };
        rho.hermitize_normalize()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<C<T>>) -> Self {
        Self { m }
    }

    pub fn from_ket(ket: &Ket<T>) -> Self {
        ket.projector()
    }

    pub fn basis(space: FockSpace, n: usize) -> Result<Self> {
        Ok(Ket::basis(space, n)?.projector())
    }

    /// Uniform mixture over the listed levels.
    pub fn maximally_mixed(space: FockSpace, levels: &[usize]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidParameter("empty level set".into()));
        }
        let mut m = DMatrix::from_element(space.dim(), space.dim(), czero());
        let w = T::one() / T::lit(levels.len() as f64);
        for &n in levels {
            if n >= space.dim() {
                return Err(Error::InvalidParameter(format!("level {n} out of range")));
            }
            m[(n, n)] += cr(w);
        }
        Ok(Self { m })
    }

    /// `Σ w_i ρ_i`, renormalized.
    pub fn mixture(parts: &[(T, &DensityMatrix<T>)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return Err(Error::InvalidParameter("empty mixture".into()));
        };
        let mut m = DMatrix::from_element(first.dim(), first.dim(), czero());
        for (w, rho) in parts {
            first.space().check(rho.dim())?;
            m += rho.m.map(|z| z.scale(*w));
        }
        Self::from_matrix(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn space(&self) -> FockSpace {
        FockSpace { dim: self.dim() }
    }

    #[inline]
    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C<T>> {
        self.m
    }

    pub fn trace(&self) -> C<T> {
        self.m.trace()
    }

    pub fn populations(&self) -> Vec<T> {
        (0..self.dim()).map(|n| self.m[(n, n)].re).collect()
    }

    /// `tr(Nρ)`.
    pub fn mean_photon(&self) -> T {
        (0..self.dim()).fold(T::zero(), |acc, n| acc + T::lit(n as f64) * self.m[(n, n)].re)
    }

    /// `tr(Aρ)`.
    pub fn expectation(&self, op: &DMatrix<C<T>>) -> C<T> {
        let d = self.dim();
        let mut acc = czero();
        for j in 0..d {
            for k in 0..d {
                acc += op[(j, k)] * self.m[(k, j)];
            }
        }
        acc
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> T {
        self.m.iter().fold(T::zero(), |acc, &z| acc + norm_sqr(z))
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> T {
        let d = self.dim();
        let mut worst = T::zero();
        for j in 0..d {
            for k in j..d {
                let diff = self.m[(j, k)] - self.m[(k, j)].conj();
                worst = worst.max(cabs(diff));
            }
        }
        worst
    }

    /// Replaces ρ by (ρ+ρ†)/2 and rescales to unit trace.
    pub fn hermitize_normalize(&mut self) -> Result<()> {
        let d = self.dim();
        for j in 0..d {
            self.m[(j, j)] = cr(self.m[(j, j)].re);
            for k in (j + 1)..d {
                let avg = (self.m[(j, k)] + self.m[(k, j)].conj()).scale(T::lit(0.5));
                self.m[(j, k)] = avg;
                self.m[(k, j)] = avg.conj();
            }
        }
        let tr = self.m.trace().re;
        if !(tr > T::zero()) || !tr.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "density matrix trace {tr} cannot be normalized"
            )));
        }
        let inv = T::one() / tr;
        self.m.iter_mut().for_each(|z| *z = z.scale(inv));
        Ok(())
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        let mut ev: Vec<T> = self.m.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    /// Checks trace, Hermiticity and positivity against the given tolerances.
    pub fn validate(&self, tol: T) -> Result<()> {
        let tr = self.trace();
        if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
            return Err(Error::NumericalFailure(format!("trace {tr} differs from 1")));
        }
        let defect = self.hermiticity_defect();
        if defect > tol {
            return Err(Error::NumericalFailure(format!(
                "Hermiticity defect {defect:e}"
            )));
        }
        let min_ev = self.eigenvalues().first().copied().unwrap_or(T::zero());
        if min_ev < -tol {
            return Err(Error::NumericalFailure(format!(
                "negative eigenvalue {min_ev:e}"
            )));
        }
        Ok(())
    }

    /// Largest elementwise gap between two density matrices.
    pub fn max_abs_diff(&self, other: &DensityMatrix<T>) -> T {
        self.m
            .iter()
            .zip(other.m.iter())
            .fold(T::zero(), |acc, (a, b)| acc.max(cabs(*a - *b)))
    }
}

/// Dense operator on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator<T: Real> {
    m: DMatrix<C<T>>,
    hermitian_hint: bool,
}

impl<T: Real> Operator<T> {
    pub fn from_matrix(m: DMatrix<C<T>>, hermitian_hint: bool) -> Self {
        Self { m, hermitian_hint }
    }

    pub fn identity(space: FockSpace) -> Self {
        Self {
            m: DMatrix::identity(space.dim(), space.dim()),
            hermitian_hint: true,
        }
    }

    /// Diagonal operator from real entries.
    pub fn diagonal(entries: &[T]) -> Self {
        let d = entries.len();
        let mut m = DMatrix::from_element(d, d, czero());
        for (n, &x) in entries.iter().enumerate() {
            m[(n, n)] = cr(x);
        }
        Self {
            m,
            hermitian_hint: true,
        }
    }

    #[inline]
    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C<T>> {
        self.m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn is_hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    pub fn adjoint(&self) -> Self {
        Self {
            m: self.m.adjoint(),
            hermitian_hint: self.hermitian_hint,
        }
    }

    pub fn compose(&self, rhs: &Operator<T>) -> Self {
        Self {
            m: &self.m * &rhs.m,
            hermitian_hint: false,
        }
    }

    /// `[self, rhs]`.
    pub fn commutator(&self, rhs: &Operator<T>) -> Self {
        Self {
            m: &self.m * &rhs.m - &rhs.m * &self.m,
            hermitian_hint: false,
        }
    }

    /// `A ρ A†`, not renormalized.
    pub fn sandwich(&self, rho: &DensityMatrix<T>) -> DMatrix<C<T>> {
        &self.m * &rho.m * self.m.adjoint()
    }

    /// Largest elementwise deviation from `A†A = I`.
    pub fn unitarity_defect(&self) -> T {
        let prod = self.m.adjoint() * &self.m;
        let d = self.dim();
        let mut worst = T::zero();
        for j in 0..d {
            for k in 0..d {
                let target = if j == k { cr(T::one()) } else { czero() };
                worst = worst.max(cabs(prod[(j, k)] - target));
            }
        }
        worst
    }
}

/// Annihilation operator: `a[n−1, n] = √n`.
pub fn annihilation<T: Real>(space: FockSpace) -> Operator<T> {
    let d = space.dim();
    let mut m = DMatrix::from_element(d, d, czero());
    for n in 1..d {
        m[(n - 1, n)] = cr(T::lit(n as f64).sqrt());
    }
    Operator {
        m,
        hermitian_hint: false,
    }
}

pub fn creation<T: Real>(space: FockSpace) -> Operator<T> {
    annihilation(space).adjoint()
}

/// `N = a†a`.
pub fn number<T: Real>(space: FockSpace) -> Operator<T> {
    let levels: Vec<T> = (0..space.dim()).map(|n| T::lit(n as f64)).collect();
    Operator::diagonal(&levels)
}

/// `tr(Nρ)`.
pub fn mean_photon<T: Real>(rho: &DensityMatrix<T>) -> T {
    rho.mean_photon()
}

/// Coherent state `|α⟩` computed from its Fock expansion and renormalized on
/// the truncated space.
pub fn coherent_state<T: Real>(space: FockSpace, alpha: C<T>) -> Result<Ket<T>> {
    let mut amps = DVector::from_element(space.dim(), czero());
    let mut term = cr(T::one());
    amps[0] = term;
    for n in 1..space.dim() {
        term = term * alpha / cr(T::lit(n as f64).sqrt());
        amps[n] = term;
    }
    let mut ket = Ket { amps };
    ket.normalize()?;
    Ok(ket)
}

#[allow(dead_code)]
pub(crate) fn complex<T: Real>(re: f64, im: f64) -> C<T> {
    c(T::lit(re), T::lit(im))
}
