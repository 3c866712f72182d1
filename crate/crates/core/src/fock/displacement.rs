use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{annihilation, CavityState, DensityMatrix, FockSpace, Ket, Operator};
use crate::scalar::{cabs, cis, cr, czero, Real, C};

/// Population above the top retained level beyond which a displacement is
/// flagged.
pub const TRUNCATION_LEAKAGE_LIMIT: f64 = 1e-6;

/// Raised when displacing `|dim−3⟩` by the same α would push more than
/// [`TRUNCATION_LEAKAGE_LIMIT`] of population past the truncation edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationWarning {
    pub alpha_abs: f64,
    pub leaked_population: f64,
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm<T: Real>(a: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    let d = a.nrows();
    let norm1 = (0..d)
        .map(|k| a.column(k).iter().fold(T::zero(), |acc, z| acc + cabs(*z)))
        .fold(T::zero(), |acc, x| acc.max(x));
    let mut squarings = 0u32;
    let mut scaled_norm = norm1;
    while scaled_norm > T::lit(0.5) {
        scaled_norm *= T::lit(0.5);
        squarings += 1;
    }
    let scale = cr(T::lit(0.5f64.powi(squarings as i32)));
    let x = a.map(|z| z * scale);

    let mut sum = DMatrix::<C<T>>::identity(d, d);
    let mut term = DMatrix::<C<T>>::identity(d, d);
    for k in 1..=40 {
        term = &term * &x;
        let inv_k = cr(T::one() / T::lit(k as f64));
        term.iter_mut().for_each(|z| *z *= inv_k);
        sum += &term;
        let term_norm = term.iter().fold(T::zero(), |acc, z| acc.max(cabs(*z)));
        if term_norm <= T::default_epsilon() * T::lit(1e-2) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `D(α) = exp(α a† − α* a)` on the truncated space, by matrix exponential.
pub fn displacement<T: Real>(
    space: FockSpace,
    alpha: C<T>,
) -> (Operator<T>, Option<TruncationWarning>) {
    let a = annihilation::<T>(space);
    let gen = a.matrix().adjoint().map(|z| z * alpha) - a.matrix().map(|z| z * alpha.conj());
    let op = Operator::from_matrix(expm(&gen), false);
    (op, truncation_warning(space, cabs(alpha).as_f64()))
}

/// `ρ' = D(α) ρ D(α)†`, re-Hermitized and renormalized.
pub fn apply_displacement<T: Real>(
    rho: &DensityMatrix<T>,
    alpha: C<T>,
) -> crate::Result<(DensityMatrix<T>, Option<TruncationWarning>)> {
    let (op, warning) = displacement(rho.space(), alpha);
    let out = DensityMatrix::from_matrix(op.sandwich(rho))?;
    Ok((out, warning))
}

fn truncation_warning(space: FockSpace, alpha_abs: f64) -> Option<TruncationWarning> {
    let leaked = truncation_leakage(space.dim(), alpha_abs);
    (leaked > TRUNCATION_LEAKAGE_LIMIT).then_some(TruncationWarning {
        alpha_abs,
        leaked_population: leaked,
    })
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Generalized Laguerre polynomial `L_n^{(k)}(x)` by three-term recurrence.
fn laguerre(n: usize, k: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + k - x;
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + k - x) * cur - (jf + k) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Population that `D(α)|dim−3⟩`, taken in the untruncated oscillator, places
/// on levels `≥ dim`.
pub fn truncation_leakage(dim: usize, alpha_abs: f64) -> f64 {
    if alpha_abs == 0.0 || dim < 3 {
        return 0.0;
    }
    let n = dim - 3;
    let x = alpha_abs * alpha_abs;
    let ln_n_fact = ln_factorial(n);
    let mut total = 0.0;
    let mut ln_m_fact = ln_factorial(dim - 1);
    let mut peak = 0.0f64;
    for m in dim..dim + 2000 {
        ln_m_fact += (m as f64).ln();
        let k = (m - n) as f64;
        let lag = laguerre(n, k, x);
        let term = if lag == 0.0 {
            0.0
        } else {
            (ln_n_fact - ln_m_fact + 2.0 * k * alpha_abs.ln() - x + 2.0 * lag.abs().ln()).exp()
        };
        total += term;
        peak = peak.max(term);
        if m > dim + 8 && term < 1e-18 * peak.max(1e-300) && term < 1e-30 {
            break;
        }
    }
    total.min(1.0)
}

/// Spectral displacement kernel for one Fock space.
///
/// With `a + a† = V Λ Vᵀ` (real symmetric) and `P = diag(e^{in(θ+π/2)})`,
/// `D(r e^{iθ}) = P V e^{−irΛ} Vᵀ P†`. One eigendecomposition serves every α.
#[derive(Debug, Clone)]
pub struct Displacer<T: Real> {
    space: FockSpace,
    vecs: DMatrix<T>,
    vals: DVector<T>,
}

struct Phases<T: Real> {
    p: Vec<C<T>>,
    e: Vec<C<T>>,
}

impl<T: Real> Displacer<T> {
    pub fn new(space: FockSpace) -> Self {
        let d = space.dim();
        let mut h = DMatrix::<T>::zeros(d, d);
        for n in 1..d {
            let s = T::lit(n as f64).sqrt();
            h[(n - 1, n)] = s;
            h[(n, n - 1)] = s;
        }
        let eig = SymmetricEigen::new(h);
        Self {
            space,
            vecs: eig.eigenvectors,
            vals: eig.eigenvalues,
        }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    fn phases(&self, alpha: C<T>) -> Phases<T> {
        let r = cabs(alpha);
        let theta = if r > T::zero() { alpha.im.atan2(alpha.re) } else { T::zero() };
        let shift = theta + T::frac_pi_2();
        let p = (0..self.space.dim())
            .map(|n| cis(T::lit(n as f64) * shift))
            .collect();
        let e = self.vals.iter().map(|&l| cis(-r * l)).collect();
        Phases { p, e }
    }

    pub fn operator(&self, alpha: C<T>) -> Operator<T> {
        let d = self.space.dim();
        let ph = self.phases(alpha);
        let mut m = DMatrix::from_element(d, d, czero());
        for j in 0..d {
            for k in 0..d {
                let mut acc = czero::<T>();
                for l in 0..d {
                    acc += ph.e[l].scale(self.vecs[(j, l)] * self.vecs[(k, l)]);
                }
                m[(j, k)] = ph.p[j] * acc * ph.p[k].conj();
            }
        }
        Operator::from_matrix(m, false)
    }

    pub fn apply_ket(&self, ket: &Ket<T>, alpha: C<T>) -> Ket<T> {
        if alpha.re == T::zero() && alpha.im == T::zero() {
            return ket.clone();
        }
        let d = self.space.dim();
        let ph = self.phases(alpha);
        let psi = ket.amplitudes();
        let w: Vec<C<T>> = (0..d).map(|n| ph.p[n].conj() * psi[n]).collect();
        let mut y = vec![czero::<T>(); d];
        for (k, yk) in y.iter_mut().enumerate() {
            let mut acc = czero::<T>();
            for (n, wn) in w.iter().enumerate() {
                acc += wn.scale(self.vecs[(n, k)]);
            }
            *yk = acc * ph.e[k];
        }
        let mut out = DVector::from_element(d, czero());
        for n in 0..d {
            let mut acc = czero::<T>();
            for (k, yk) in y.iter().enumerate() {
                acc += yk.scale(self.vecs[(n, k)]);
            }
            out[n] = ph.p[n] * acc;
        }
        Ket::from_vector(out).expect("dimension fixed by the displacer")
    }

    /// `D(α) ρ D(α)†`, re-Hermitized and renormalized.
    pub fn apply_density(
        &self,
        rho: &DensityMatrix<T>,
        alpha: C<T>,
    ) -> crate::Result<DensityMatrix<T>> {
        if alpha.re == T::zero() && alpha.im == T::zero() {
            return Ok(rho.clone());
        }
        let d = self.space.dim();
        let ph = self.phases(alpha);
        let m = rho.matrix();
        let mut wr = DMatrix::<T>::zeros(d, d);
        let mut wi = DMatrix::<T>::zeros(d, d);
        for k in 0..d {
            for j in 0..d {
                let z = ph.p[j].conj() * m[(j, k)] * ph.p[k];
                wr[(j, k)] = z.re;
                wi[(j, k)] = z.im;
            }
        }
        let v = &self.vecs;
        let xr = v.tr_mul(&wr) * v;
        let xi = v.tr_mul(&wi) * v;
        let mut yr = DMatrix::<T>::zeros(d, d);
        let mut yi = DMatrix::<T>::zeros(d, d);
        for k in 0..d {
            for j in 0..d {
                let z = ph.e[j] * C::new(xr[(j, k)], xi[(j, k)]) * ph.e[k].conj();
                yr[(j, k)] = z.re;
                yi[(j, k)] = z.im;
            }
        }
        let zr = v * yr * v.transpose();
        let zi = v * yi * v.transpose();
        let mut out = DMatrix::from_element(d, d, czero());
        for k in 0..d {
            for j in 0..d {
                out[(j, k)] = ph.p[j] * C::new(zr[(j, k)], zi[(j, k)]) * ph.p[k].conj();
            }
        }
        let mut out = DensityMatrix::from_matrix_unchecked(out);
        out.hermitize_normalize()?;
        Ok(out)
    }

    pub fn apply(&self, state: &CavityState<T>, alpha: C<T>) -> crate::Result<CavityState<T>> {
        Ok(match state {
            CavityState::Pure(ket) => CavityState::Pure(self.apply_ket(ket, alpha)),
            CavityState::Mixed(rho) => CavityState::Mixed(self.apply_density(rho, alpha)?),
        })
    }

    /// Same check as [`displacement`] performs.
    pub fn truncation_warning(&self, alpha: C<T>) -> Option<TruncationWarning> {
        truncation_warning(self.space, cabs(alpha).as_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::coherent_state;
    use crate::scalar::c;

    fn space(d: usize) -> FockSpace {
        FockSpace::new(d).unwrap()
    }

    fn poisson(mean: f64, n: usize) -> f64 {
        (-mean + n as f64 * mean.ln() - ln_factorial(n)).exp()
    }

    fn max_gap(a: &DMatrix<C<f64>>, b: &DMatrix<C<f64>>) -> f64 {
        a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
    }

    #[test]
    fn zero_alpha_is_identity() {
        let (d, warn) = displacement::<f64>(space(30), czero());
        assert!(warn.is_none());
        assert_eq!(max_gap(d.matrix(), &DMatrix::identity(30, 30)), 0.0);
    }

    #[test]
    fn vacuum_column_is_poisson() {
        let alpha = c(0.6, 0.8);
        let (d, _) = displacement::<f64>(space(30), alpha);
        for n in 0..30 {
            let pop = d.matrix()[(n, 0)].norm_sqr();
            assert!((pop - poisson(1.0, n)).abs() < 1e-8, "n={n}");
        }
    }

    #[test]
    fn vacuum_column_matches_coherent_expansion() {
        let alpha = c(0.7, -0.4);
        let (d, _) = displacement::<f64>(space(30), alpha);
        let coh = coherent_state(space(30), alpha).unwrap();
        for n in 0..30 {
            let expected = coh.amplitudes()[n];
            assert!((d.matrix()[(n, 0)] - expected).norm() < 1e-8, "n={n}");
        }
        // mean displacement ⟨a⟩ = α
        let a = annihilation::<f64>(space(30));
        let col = d.matrix().column(0).into_owned();
        let mean_a = col.dotc(&(a.matrix() * &col));
        assert!((mean_a - alpha).norm() < 1e-8);
    }

    #[test]
    fn inverse_and_unitarity() {
        let s = space(30);
        let alpha = c(0.3, 0.4);
        let (d, _) = displacement::<f64>(s, alpha);
        let (dm, _) = displacement::<f64>(s, -alpha);
        let prod = d.matrix() * dm.matrix();
        assert!(max_gap(&prod, &DMatrix::identity(30, 30)) < 1e-10);
        assert!(d.unitarity_defect() < 1e-10);
    }

    #[test]
    fn spectral_route_matches_expm() {
        let s = space(30);
        let disp = Displacer::<f64>::new(s);
        for &alpha in &[c(0.3, 0.0), c(-0.2, 0.25), c(1.1, -0.7), c(0.0, -2.0)] {
            let (reference, _) = displacement(s, alpha);
            let fast = disp.operator(alpha);
            assert!(max_gap(reference.matrix(), fast.matrix()) < 1e-10, "{alpha}");
        }
    }

    #[test]
    fn spectral_ket_and_density_paths_agree() {
        let s = space(30);
        let disp = Displacer::<f64>::new(s);
        let half = 0.5f64.sqrt();
        let ket = Ket::from_components(s, &[(1, cr(half)), (4, c(0.0, half))]).unwrap();
        let alpha = c(0.25, -0.15);
        let k2 = disp.apply_ket(&ket, alpha);
        let r2 = disp.apply_density(&ket.projector(), alpha).unwrap();
        assert!(k2.projector().max_abs_diff(&r2) < 1e-13);
        let (op, _) = displacement(s, alpha);
        let k3 = ket.apply(&op);
        assert!((k2.amplitudes() - k3.amplitudes()).norm() < 1e-12);
    }

    #[test]
    fn apply_displacement_on_vacuum() {
        let rho = DensityMatrix::<f64>::basis(space(30), 0).unwrap();
        let (out, _) = apply_displacement(&rho, cr(1.0)).unwrap();
        for (n, p) in out.populations().iter().enumerate() {
            assert!((p - poisson(1.0, n)).abs() < 1e-8);
        }
        assert!((out.mean_photon() - 1.0).abs() < 1e-8);
        let (same, _) = apply_displacement(&rho, czero()).unwrap();
        assert!(same.max_abs_diff(&rho) < 1e-15);
    }

    #[test]
    fn laguerre_low_orders() {
        let (k, x) = (2.5, 0.7);
        assert!((laguerre(0, k, x) - 1.0).abs() < 1e-15);
        assert!((laguerre(1, k, x) - (1.0 + k - x)).abs() < 1e-15);
        let l2 = 0.5 * (x * x - 2.0 * (k + 2.0) * x + (k + 1.0) * (k + 2.0));
        assert!((laguerre(2, k, x) - l2).abs() < 1e-14);
    }

    #[test]
    fn leakage_matches_wide_space_simulation() {
        // Oracle: displace |dim−3⟩ inside a much larger space and read off
        // the population at and above `dim`.
        let dim = 12;
        let wide = space(80);
        for &r in &[0.05, 0.3, 0.8] {
            let (d, _) = displacement::<f64>(wide, cr(r));
            let col = d.matrix().column(dim - 3);
            let above: f64 = (dim..80).map(|m| col[m].norm_sqr()).sum();
            let analytic = truncation_leakage(dim, r);
            assert!((above - analytic).abs() < 1e-10 * (1.0 + above), "r={r}");
        }
    }

    #[test]
    fn truncation_guard_fires_near_the_edge() {
        assert!(Displacer::<f64>::new(space(30)).truncation_warning(czero()).is_none());
        let (_, warn) = displacement::<f64>(space(30), cr(1e-5));
        assert!(warn.is_none());
        let (_, warn) = displacement::<f64>(space(30), cr(2.0));
        let warn = warn.expect("guard must fire at |α|=2");
        assert!(warn.leaked_population > 0.1);
    }
}
