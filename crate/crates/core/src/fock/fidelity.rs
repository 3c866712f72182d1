use nalgebra::{DMatrix, SymmetricEigen};

use super::{DensityMatrix, Ket};
use crate::error::{Error, Result};
use crate::scalar::{cr, Real, C};

const NEGATIVE_EIGENVALUE_LIMIT: f64 = -1e-6;

/// `F = ⟨ψ|ρ|ψ⟩`, clamped to `[0, 1]`.
pub fn fidelity_pure<T: Real>(rho: &DensityMatrix<T>, target: &Ket<T>) -> T {
    let psi = target.amplitudes();
    let value = psi.dotc(&(rho.matrix() * psi)).re;
    value.max(T::zero()).min(T::one())
}

fn checked_eigen<T: Real>(m: DMatrix<C<T>>, what: &str) -> Result<SymmetricEigen<C<T>, nalgebra::Dyn>> {
    let eig = SymmetricEigen::new(m);
    if let Some(&worst) = eig
        .eigenvalues
        .iter()
        .find(|&&l| l < T::lit(NEGATIVE_EIGENVALUE_LIMIT))
    {
        return Err(Error::NumericalFailure(format!(
            "{what} has eigenvalue {worst:e}"
        )));
    }
    Ok(eig)
}

/// `F(ρ, σ) = (tr √(√ρ σ √ρ))²`, with `√ρ` formed from the eigendecomposition
/// of ρ.
pub fn fidelity_general<T: Real>(rho: &DensityMatrix<T>, sigma: &DensityMatrix<T>) -> Result<T> {
    rho.space().check(sigma.dim())?;
    let d = rho.dim();
    let eig = checked_eigen(rho.matrix().clone(), "rho")?;
    let u = &eig.eigenvectors;
    let root = DMatrix::from_fn(d, d, |j, k| if j == k { cr(eig.eigenvalues[j].max(T::zero()).sqrt()) } else { cr(T::zero()) });
    let sqrt_rho = u * root * u.adjoint();
    let mut inner = &sqrt_rho * sigma.matrix() * &sqrt_rho;
    let inner_h = inner.adjoint();
    inner = (inner + inner_h).map(|z| z.scale(T::lit(0.5)));
    let eig = checked_eigen(inner, "sqrt(rho) sigma sqrt(rho)")?;
    let top = eig.eigenvalues.iter().fold(T::zero(), |acc, &l| acc.max(l));
    // rounding leaves eigenvalues of order ε·‖M‖ where the exact value is zero
    let floor = top * T::default_epsilon() * T::lit(10.0 * d as f64);
    let root_sum = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > floor)
        .fold(T::zero(), |acc, &l| acc + l.sqrt());
    Ok((root_sum * root_sum).max(T::zero()).min(T::one()))
}
