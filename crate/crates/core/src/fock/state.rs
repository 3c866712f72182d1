use nalgebra::DMatrix;

use super::{fidelity_pure, DensityMatrix, FockSpace, Ket};
use crate::error::Result;
use crate::scalar::{cabs, Real, C};

/// Cavity state handle: kept as a ket while the evolution is pure, promoted to
/// a density matrix once a mixing channel acts on it.
#[derive(Debug, Clone, PartialEq)]
pub enum CavityState<T: Real> {
    Pure(Ket<T>),
    Mixed(DensityMatrix<T>),
}

impl<T: Real> CavityState<T> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Pure(k) => k.dim(),
            Self::Mixed(r) => r.dim(),
        }
    }

    pub fn space(&self) -> FockSpace {
        match self {
            Self::Pure(k) => k.space(),
            Self::Mixed(r) => r.space(),
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self, Self::Pure(_))
    }

    pub fn to_density(&self) -> DensityMatrix<T> {
        match self {
            Self::Pure(k) => k.projector(),
            Self::Mixed(r) => r.clone(),
        }
    }

    pub fn into_density(self) -> DensityMatrix<T> {
        match self {
            Self::Pure(k) => k.projector(),
            Self::Mixed(r) => r,
        }
    }

    pub fn populations(&self) -> Vec<T> {
        match self {
            Self::Pure(k) => k.populations(),
            Self::Mixed(r) => r.populations(),
        }
    }

    pub fn mean_photon(&self) -> T {
        match self {
            Self::Pure(k) => k.mean_photon(),
            Self::Mixed(r) => r.mean_photon(),
        }
    }

    /// `⟨ψ|ρ|ψ⟩` against a pure target.
    pub fn fidelity(&self, target: &Ket<T>) -> T {
        match self {
            Self::Pure(k) => target.inner(k).norm_sqr().min(T::one()),
            Self::Mixed(r) => fidelity_pure(r, target),
        }
    }

    /// `tr(Aρ)`.
    pub fn expectation(&self, op: &DMatrix<C<T>>) -> C<T> {
        match self {
            Self::Pure(k) => {
                let psi = k.amplitudes();
                psi.dotc(&(op * psi))
            }
            Self::Mixed(r) => r.expectation(op),
        }
    }

    /// Largest elementwise gap between the two states' density matrices.
    pub fn max_abs_diff(&self, other: &CavityState<T>) -> T {
        match (self, other) {
            (Self::Pure(a), Self::Pure(b)) => {
                let (x, y) = (a.amplitudes(), b.amplitudes());
                let d = x.len();
                let mut worst = T::zero();
                for j in 0..d {
                    for k in 0..d {
                        let gap = x[j] * x[k].conj() - y[j] * y[k].conj();
                        worst = worst.max(cabs(gap));
                    }
                }
                worst
            }
            _ => self.to_density().max_abs_diff(&other.to_density()),
        }
    }

    /// Renormalizes in place (and re-Hermitizes the mixed form).
    pub fn normalize(&mut self) -> Result<()> {
        match self {
            Self::Pure(k) => k.normalize(),
            Self::Mixed(r) => r.hermitize_normalize(),
        }
    }

    pub fn trace(&self) -> C<T> {
        match self {
            Self::Pure(k) => C::new(k.norm_squared(), T::zero()),
            Self::Mixed(r) => r.trace(),
        }
    }

}

impl<T: Real> From<Ket<T>> for CavityState<T> {
    fn from(k: Ket<T>) -> Self {
        Self::Pure(k)
    }
}

impl<T: Real> From<DensityMatrix<T>> for CavityState<T> {
    fn from(r: DensityMatrix<T>) -> Self {
        Self::Mixed(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cr;

    #[test]
    fn pure_and_mixed_views_agree() {
        let s = FockSpace::new(8).unwrap();
        let half = 0.5f64.sqrt();
        let ket = Ket::from_components(s, &[(1, cr(half)), (4, cr(-half))]).unwrap();
        let target = Ket::from_components(s, &[(1, cr(half)), (4, cr(half))]).unwrap();
        let pure = CavityState::Pure(ket.clone());
        let mixed = CavityState::Mixed(ket.projector());
        assert!(pure.max_abs_diff(&mixed) < 1e-15);
        assert!((pure.fidelity(&target) - mixed.fidelity(&target)).abs() < 1e-15);
        assert!((pure.mean_photon() - 2.5).abs() < 1e-14);
        let n = crate::fock::number::<f64>(s);
        assert!((pure.expectation(n.matrix()).re - 2.5).abs() < 1e-14);
    }
}
