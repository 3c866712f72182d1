//! Random states for tests, benchmarks and property checks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DensityMatrix, FockSpace, Ket};
use crate::scalar::{c, czero, Real, C};

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> C<T> {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(T::lit(re), T::lit(im))
}

/// Normalized ket with i.i.d. complex Gaussian amplitudes on `support`.
pub fn random_ket<T: Real, R: Rng + ?Sized>(space: FockSpace, support: &[usize], rng: &mut R) -> Ket<T> {
    assert!(!support.is_empty(), "support must be nonempty");
    let comps: Vec<(usize, C<T>)> = support.iter().map(|&n| (n, gaussian(rng))).collect();
    Ket::from_components(space, &comps).expect("gaussian amplitudes are nonzero almost surely")
}

/// Ket with real Gaussian amplitudes on `support`.
pub fn random_real_ket<T: Real, R: Rng + ?Sized>(space: FockSpace, support: &[usize], rng: &mut R) -> Ket<T> {
    let comps: Vec<(usize, C<T>)> = support
        .iter()
        .map(|&n| {
            let x: f64 = StandardNormal.sample(rng);
            (n, c(T::lit(x), T::zero()))
        })
        .collect();
    Ket::from_components(space, &comps).expect("gaussian amplitudes are nonzero almost surely")
}

/// Mixture of `rank` random kets on `support` with Dirichlet-like weights.
pub fn random_density<T: Real, R: Rng + ?Sized>(
    space: FockSpace,
    support: &[usize],
    rank: usize,
    rng: &mut R,
) -> DensityMatrix<T> {
    let d = space.dim();
    let mut m = DMatrix::from_element(d, d, czero());
    for _ in 0..rank.max(1) {
        let w = T::lit(rng.random_range(0.05..1.0));
        let k = random_ket::<T, R>(space, support, rng);
        m += k.projector().matrix().map(|z| z.scale(w));
    }
    DensityMatrix::from_matrix(m).expect("positive weights")
}

/// α drawn uniformly from the disk `|α| ≤ radius`.
pub fn random_alpha<T: Real, R: Rng + ?Sized>(radius: f64, rng: &mut R) -> C<T> {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    c(T::lit(r * phi.cos()), T::lit(r * phi.sin()))
}
