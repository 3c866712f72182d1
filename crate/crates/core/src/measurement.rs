//! Ramsey weak-measurement operators and the stabilizable-subspace algebra.
//!
//! With per-photon phase φ0 and analysis phase φ_R the two Kraus operators are
//! diagonal, `M_g = cos((φ0 N − φ_R)/2)` and `M_e = sin((φ0 N − φ_R)/2)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{CavityState, DensityMatrix, FockSpace, Ket, Operator};
use crate::scalar::Real;

/// Smallest outcome probability the back-action will condition on.
pub const MIN_OUTCOME_PROBABILITY: f64 = 1e-14;

/// Offset of the analysis phase from the target angle under the even rule.
pub const EVEN_RAMSEY_OFFSET: f64 = 2.0 * PI / 5.0;

/// Default eigen-residual tolerance of [`verify_stabilizable`].
pub const STABILIZABLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    G,
    E,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::G, Outcome::E];

    pub fn flipped(self) -> Self {
        match self {
            Outcome::G => Outcome::E,
            Outcome::E => Outcome::G,
        }
    }

    /// `g → 0`, `e → 1`.
    pub fn bit(self) -> usize {
        match self {
            Outcome::G => 0,
            Outcome::E => 1,
        }
    }

    pub fn from_bit(bit: usize) -> Self {
        if bit & 1 == 0 {
            Outcome::G
        } else {
            Outcome::E
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Outcome::G => 'g',
            Outcome::E => 'e',
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Which φ0 rule to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// `φ0 = 4π/Δn`, analysis phase at mid-fringe.
    Odd,
    /// `φ0 = 2π/Δn`, analysis phase 2π/5 from the target angle, phase tracking.
    Even,
}

impl Parity {
    pub fn natural(delta_n: usize) -> Self {
        if delta_n % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetup {
    pub delta_n: usize,
    pub phi0: f64,
    pub phi_r: f64,
    pub parity: Parity,
    pub phase_tracking: bool,
    pub target_subspace: usize,
}

/// Parameter selection for a target living in `W_m^{Δn}` with
/// `m = target_subspace`.
pub fn build_setup(
    delta_n: usize,
    target_subspace: usize,
    parity_override: Option<Parity>,
) -> Result<MeasurementSetup> {
    if delta_n == 0 {
        return Err(Error::InvalidParameter("delta_n must be at least 1".into()));
    }
    if target_subspace >= delta_n {
        return Err(Error::InvalidParameter(format!(
            "target subspace {target_subspace} must be below delta_n = {delta_n}"
        )));
    }
    let parity = parity_override.unwrap_or_else(|| Parity::natural(delta_n));
    let m = target_subspace as f64;
    let (phi0, offset) = match parity {
        Parity::Odd => (2.0 * TAU / delta_n as f64, FRAC_PI_2),
        Parity::Even => (TAU / delta_n as f64, EVEN_RAMSEY_OFFSET),
    };
    let phi0_dn = phi0 * delta_n as f64;
    // M_s picks up a sign every Δn levels exactly when φ0·Δn ≡ 2π (mod 4π)
    let phase_tracking = ((phi0_dn - TAU) / (2.0 * TAU)).fract().abs() < 1e-9
        || ((phi0_dn - TAU) / (2.0 * TAU)).fract().abs() > 1.0 - 1e-9;
    Ok(MeasurementSetup {
        delta_n,
        phi0,
        phi_r: (phi0 * m + offset).rem_euclid(2.0 * TAU),
        parity,
        phase_tracking,
        target_subspace,
    })
}

/// `gcd` of the pairwise gaps of a sorted support.
fn support_gcd(support: &[usize]) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    support.windows(2).fold(0, |g, w| gcd(g, w[1] - w[0]))
}

impl MeasurementSetup {
    /// Infers `Δn` and `m` from the target's Fock support. A single-level
    /// target `|n⟩` gets `Δn = 2n+1` unless `delta_n` is given.
    pub fn for_target<T: Real>(
        target: &Ket<T>,
        delta_n: Option<usize>,
        parity_override: Option<Parity>,
    ) -> Result<Self> {
        let support = target.support(T::lit(1e-24));
        let Some(&first) = support.first() else {
            return Err(Error::InvalidParameter("target has empty support".into()));
        };
        let dn = match delta_n {
            Some(dn) => dn,
            None => match support_gcd(&support) {
                0 => 2 * first + 1,
                g => g,
            },
        };
        if dn == 0 {
            return Err(Error::InvalidParameter("delta_n must be at least 1".into()));
        }
        build_setup(dn, first % dn, parity_override)
    }

    /// Argument `(φ0 n − φ_R)/2` of the Kraus diagonals.
    pub fn half_angle(&self, n: usize) -> f64 {
        0.5 * (self.phi0 * n as f64 - self.phi_r)
    }

    /// Frame signs `(−1)^{⌊n/Δn⌋}` picked up by a tracked measurement, or all
    /// ones when tracking is off.
    pub fn frame_signs(&self, dim: usize) -> Vec<f64> {
        (0..dim)
            .map(|n| {
                if self.phase_tracking && (n / self.delta_n) % 2 == 1 {
                    -1.0
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Target expressed in the frame reached after `measurements` tracked
    /// measurements.
    pub fn tracked_target<T: Real>(&self, target: &Ket<T>, measurements: usize) -> Ket<T> {
        if !self.phase_tracking || measurements % 2 == 0 {
            return target.clone();
        }
        let signs = self.frame_signs(target.dim());
        let mut out = target.clone();
        for (z, s) in out.amplitudes_mut().iter_mut().zip(signs) {
            *z = z.scale(T::lit(s));
        }
        out
    }
}

/// Diagonals of `M_g` and `M_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOps<T: Real> {
    g: DVector<T>,
    e: DVector<T>,
}

pub fn build_ops<T: Real>(setup: &MeasurementSetup, space: FockSpace) -> MeasurementOps<T> {
    let d = space.dim();
    MeasurementOps {
        g: DVector::from_fn(d, |n, _| T::lit(setup.half_angle(n).cos())),
        e: DVector::from_fn(d, |n, _| T::lit(setup.half_angle(n).sin())),
    }
}

impl<T: Real> MeasurementOps<T> {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn diagonal(&self, outcome: Outcome) -> &DVector<T> {
        match outcome {
            Outcome::G => &self.g,
            Outcome::E => &self.e,
        }
    }

    pub fn m_g(&self) -> Operator<T> {
        Operator::diagonal(self.g.as_slice())
    }

    pub fn m_e(&self) -> Operator<T> {
        Operator::diagonal(self.e.as_slice())
    }

    /// Largest diagonal deviation of `M_g†M_g + M_e†M_e` from the identity.
    pub fn completeness_defect(&self) -> T {
        self.g
            .iter()
            .zip(self.e.iter())
            .fold(T::zero(), |acc, (&g, &e)| acc.max((g * g + e * e - T::one()).abs()))
    }

    /// Unnormalized `tr(M_s ρ M_s†)` contribution of a population vector.
    fn weight(&self, outcome: Outcome, populations: impl Iterator<Item = T>) -> T {
        self.diagonal(outcome)
            .iter()
            .zip(populations)
            .fold(T::zero(), |acc, (&m, p)| acc + m * m * p)
    }

    /// `(p_g, p_e)` for a state.
    pub fn probs(&self, state: &CavityState<T>) -> (T, T) {
        match state {
            CavityState::Pure(k) => {
                let pops = || k.amplitudes().iter().map(|z| z.norm_sqr());
                (self.weight(Outcome::G, pops()), self.weight(Outcome::E, pops()))
            }
            CavityState::Mixed(r) => outcome_probs(self, r),
        }
    }

    /// `M_s ρ M_s†` left unnormalized.
    pub fn apply_unnormalized(&self, state: &CavityState<T>, outcome: Outcome) -> CavityState<T> {
        let m = self.diagonal(outcome);
        match state {
            CavityState::Pure(k) => {
                let mut out = k.clone();
                for (z, &mn) in out.amplitudes_mut().iter_mut().zip(m.iter()) {
                    *z = z.scale(mn);
                }
                CavityState::Pure(out)
            }
            CavityState::Mixed(r) => {
                let mut out = r.matrix().clone();
                let d = out.nrows();
                for k in 0..d {
                    for j in 0..d {
                        out[(j, k)] = out[(j, k)].scale(m[j] * m[k]);
                    }
                }
                CavityState::Mixed(DensityMatrix::from_matrix_unchecked(out))
            }
        }
    }

    /// Conditional state after outcome `s`.
    pub fn collapse(&self, state: &CavityState<T>, outcome: Outcome) -> Result<CavityState<T>> {
        let (pg, pe) = self.probs(state);
        let p = match outcome {
            Outcome::G => pg,
            Outcome::E => pe,
        };
        if !(p.as_f64() > MIN_OUTCOME_PROBABILITY) {
            return Err(Error::ZeroProbabilityOutcome {
                outcome,
                probability: p.as_f64(),
            });
        }
        let mut out = self.apply_unnormalized(state, outcome);
        out.normalize()?;
        Ok(out)
    }
}

pub fn outcome_probs<T: Real>(ops: &MeasurementOps<T>, rho: &DensityMatrix<T>) -> (T, T) {
    let pops = || (0..rho.dim()).map(|n| rho.matrix()[(n, n)].re);
    (ops.weight(Outcome::G, pops()), ops.weight(Outcome::E, pops()))
}

/// `ρ' = M_s ρ M_s† / tr(M_s ρ M_s†)`.
pub fn back_action<T: Real>(
    ops: &MeasurementOps<T>,
    rho: &DensityMatrix<T>,
    outcome: Outcome,
) -> Result<DensityMatrix<T>> {
    let state = CavityState::Mixed(rho.clone());
    Ok(ops.collapse(&state, outcome)?.into_density())
}

/// `m = n mod Δn`.
pub fn subspace_index(n: usize, delta_n: usize) -> usize {
    n % delta_n
}

/// Population of `W_m^{Δn}`.
pub fn subspace_population<T: Real>(populations: &[T], m: usize, delta_n: usize) -> T {
    populations
        .iter()
        .enumerate()
        .filter(|(n, _)| n % delta_n == m)
        .fold(T::zero(), |acc, (_, &p)| acc + p)
}

/// Equatorial Bloch angle `Φ = φ0·m mod 2π` of subspace `m`.
pub fn bloch_angle(m: usize, setup: &MeasurementSetup) -> f64 {
    (setup.phi0 * m as f64).rem_euclid(TAU)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizabilityReport {
    pub stabilizable: bool,
    pub lambda_g: f64,
    pub lambda_e: f64,
    pub residual_g: f64,
    pub residual_e: f64,
}

impl StabilizabilityReport {
    pub fn max_residual(&self) -> f64 {
        self.residual_g.max(self.residual_e)
    }
}

/// Checks `M_s|ψ⟩ = λ_s|ψ⟩` for both outcomes; with phase tracking the right
/// side is taken in the flipped frame, `λ_s F|ψ⟩`.
pub fn verify_stabilizable<T: Real>(target: &Ket<T>, setup: &MeasurementSetup) -> StabilizabilityReport {
    let ops = build_ops::<T>(setup, target.space());
    let reference = setup.tracked_target(target, 1);
    let psi = target.amplitudes();
    let mut residuals = [0.0; 2];
    let mut lambdas = [0.0; 2];
    for outcome in Outcome::BOTH {
        let m = ops.diagonal(outcome);
        let image = DVector::from_fn(psi.len(), |n, _| psi[n].scale(m[n]));
        let lambda = reference.amplitudes().dotc(&image);
        let fitted = reference.amplitudes().map(|z| z * lambda);
        residuals[outcome.bit()] = (image - fitted).norm().as_f64();
        lambdas[outcome.bit()] = lambda.re.as_f64();
    }
    StabilizabilityReport {
        stabilizable: residuals[0] < STABILIZABLE_TOLERANCE && residuals[1] < STABILIZABLE_TOLERANCE,
        lambda_g: lambdas[0],
        lambda_e: lambdas[1],
        residual_g: residuals[0],
        residual_e: residuals[1],
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{c, cr};

    fn space(d: usize) -> FockSpace {
        FockSpace::new(d).unwrap()
    }

    fn two_comp(n1: usize, n2: usize) -> Ket<f64> {
        let h = 0.5f64.sqrt();
        Ket::from_components(space(30), &[(n1, cr(h)), (n2, cr(h))]).unwrap()
    }

    #[test]
    fn phi0_selection_rules() {
        let s5 = build_setup(5, 0, None).unwrap();
        assert!((s5.phi0 - 4.0 * PI / 5.0).abs() < 1e-15);
        assert!(!s5.phase_tracking);
        let s3 = build_setup(3, 1, None).unwrap();
        assert!((s3.phi0 - 4.0 * PI / 3.0).abs() < 1e-15);
        let s4 = build_setup(4, 0, None).unwrap();
        assert!((s4.phi0 - FRAC_PI_2).abs() < 1e-15);
        assert!(s4.phase_tracking);
        assert_eq!(s4.parity, Parity::Even);
        assert!(build_setup(0, 0, None).is_err());
        assert!(build_setup(3, 3, None).is_err());
    }

    #[test]
    fn kraus_diagonals_match_definition() {
        let setup = build_setup(3, 1, None).unwrap();
        let ops = build_ops::<f64>(&setup, space(30));
        for n in 0..30 {
            let x = 0.5 * (setup.phi0 * n as f64 - setup.phi_r);
            assert_eq!(ops.diagonal(Outcome::G)[n], x.cos());
            assert_eq!(ops.diagonal(Outcome::E)[n], x.sin());
        }
        assert!(ops.completeness_defect() < 1e-15);
    }

    #[test]
    fn level_on_the_fringe_maximum_is_unaffected() {
        let mut setup = build_setup(3, 0, None).unwrap();
        setup.phi_r = setup.phi0 * 2.0;
        let ops = build_ops::<f64>(&setup, space(10));
        assert!((ops.diagonal(Outcome::G)[2] - 1.0).abs() < 1e-15);
        assert!(ops.diagonal(Outcome::E)[2].abs() < 1e-15);
    }

    #[test]
    fn benchmark_outcome_probabilities() {
        let setup = build_setup(3, 1, None).unwrap();
        let ops = build_ops::<f64>(&setup, space(30));
        let p = |n: usize| outcome_probs(&ops, &DensityMatrix::basis(space(30), n).unwrap()).0;
        // (0 − 4π/3 − π/2)/2 = −11π/12
        assert!((p(0) - (11.0 * PI / 12.0).cos().powi(2)).abs() < 1e-14);
        assert!((p(1) - 0.5).abs() < 1e-12);
        assert!((p(4) - 0.5).abs() < 1e-12);
        let (pg, pe) = ops.probs(&CavityState::Pure(two_comp(1, 4)));
        assert!((pg - 0.5).abs() < 1e-12 && (pg + pe - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mid_fringe_for_unit_delta_n() {
        let setup = build_setup(1, 0, None).unwrap();
        assert!((setup.phi_r - FRAC_PI_2).abs() < 1e-15);
        let ops = build_ops::<f64>(&setup, space(5));
        let (pg, _) = outcome_probs(&ops, &DensityMatrix::basis(space(5), 0).unwrap());
        assert!((pg - 0.5).abs() < 1e-15);
    }

    #[test]
    fn subspace_members_share_probabilities() {
        let s = space(30);
        for dn in 1..7 {
            let setup = build_setup(dn, 0, None).unwrap();
            let ops = build_ops::<f64>(&setup, s);
            for m in 0..dn {
                let p0 = outcome_probs(&ops, &DensityMatrix::basis(s, m).unwrap()).0;
                for n in (m..30).step_by(dn) {
                    let p = outcome_probs(&ops, &DensityMatrix::basis(s, n).unwrap()).0;
                    assert!((p - p0).abs() < 1e-12, "dn={dn} m={m} n={n}");
                }
                let levels: Vec<usize> = (m..30).step_by(dn).collect();
                let mixed = DensityMatrix::maximally_mixed(s, &levels).unwrap();
                assert!((outcome_probs(&ops, &mixed).0 - p0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn even_rule_discriminates_every_subspace() {
        for dn in [2usize, 4] {
            for target in 0..dn {
                let setup = build_setup(dn, target, None).unwrap();
                let ops = build_ops::<f64>(&setup, space(12));
                let probs: Vec<f64> = (0..dn)
                    .map(|m| outcome_probs(&ops, &DensityMatrix::basis(space(12), m).unwrap()).0)
                    .collect();
                for i in 0..dn {
                    for j in (i + 1)..dn {
                        assert!((probs[i] - probs[j]).abs() > 1e-3, "dn={dn} {probs:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn back_action_on_two_level_mixture() {
        // oracle: diag(½,½) on |1⟩,|2⟩ → weights ∝ cos² of each level's half angle
        let s = space(30);
        let setup = build_setup(3, 1, None).unwrap();
        let ops = build_ops::<f64>(&setup, s);
        let rho = DensityMatrix::maximally_mixed(s, &[1, 2]).unwrap();
        let out = back_action(&ops, &rho, Outcome::G).unwrap();
        let c1 = setup.half_angle(1).cos().powi(2);
        let c2 = setup.half_angle(2).cos().powi(2);
        assert!((out.populations()[1] - c1 / (c1 + c2)).abs() < 1e-14);
        assert!((out.populations()[2] - c2 / (c1 + c2)).abs() < 1e-14);
    }

    #[test]
    fn fock_projectors_are_fixed() {
        let s = space(10);
        let setup = build_setup(3, 1, None).unwrap();
        let ops = build_ops::<f64>(&setup, s);
        let vac = DensityMatrix::basis(s, 0).unwrap();
        for o in Outcome::BOTH {
            assert!(back_action(&ops, &vac, o).unwrap().max_abs_diff(&vac) < 1e-15);
        }
    }

    #[test]
    fn zero_probability_outcome_is_an_error() {
        let s = space(10);
        let mut setup = build_setup(3, 0, None).unwrap();
        setup.phi_r = 0.0;
        let ops = build_ops::<f64>(&setup, s);
        let vac = DensityMatrix::basis(s, 0).unwrap();
        assert!(matches!(
            back_action(&ops, &vac, Outcome::E),
            Err(Error::ZeroProbabilityOutcome { outcome: Outcome::E, .. })
        ));
    }

    #[test]
    fn subspace_bookkeeping() {
        assert_eq!(subspace_index(4, 3), 1);
        assert_eq!(subspace_index(0, 5), 0);
        assert_eq!(subspace_index(7, 3), 1);
        let pops = two_comp(1, 4).populations();
        assert!((subspace_population(&pops, 1, 3) - 1.0).abs() < 1e-15);
        let total: f64 = (0..3).map(|m| subspace_population(&pops, m, 3)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn coherent_subspace_population_matches_poisson_sum() {
        let s = space(40);
        let coh = crate::fock::coherent_state::<f64>(s, cr(2.5f64.sqrt())).unwrap();
        let got = subspace_population(&coh.populations(), 0, 3);
        // oracle: Σ_{n ≡ 0 mod 3} e^{−λ} λ^n / n! with λ = 2.5, summed far past the cutoff
        let lam: f64 = 2.5;
        let mut term = (-lam).exp();
        let mut want = 0.0;
        for n in 0..120 {
            if n % 3 == 0 {
                want += term;
            }
            term *= lam / (n + 1) as f64;
        }
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn bloch_angles() {
        let s5 = build_setup(5, 0, None).unwrap();
        let want = [0.0, 0.8 * PI, 1.6 * PI, 0.4 * PI, 1.2 * PI];
        for (m, w) in want.iter().enumerate() {
            assert!((bloch_angle(m, &s5) - w).abs() < 1e-12, "m={m}");
        }
        let s4 = build_setup(4, 0, None).unwrap();
        assert!(((bloch_angle(2, &s4) - bloch_angle(0, &s4)).abs() - PI).abs() < 1e-12);
        assert_eq!(bloch_angle(0, &s4), 0.0);
    }

    #[test]
    fn stabilizability_examples() {
        let setup = build_setup(3, 1, None).unwrap();
        let r = verify_stabilizable(&two_comp(1, 4), &setup);
        assert!(r.stabilizable && r.max_residual() < 1e-12);
        assert!(verify_stabilizable(&two_comp(0, 3), &setup).stabilizable);
        assert!(!verify_stabilizable(&two_comp(0, 1), &setup).stabilizable);
    }

    #[test]
    fn even_delta_n_needs_the_tracked_frame() {
        let target = two_comp(0, 4);
        let setup = MeasurementSetup::for_target(&target, None, None).unwrap();
        assert_eq!(setup.delta_n, 4);
        assert!(setup.phase_tracking);
        assert!(verify_stabilizable(&target, &setup).stabilizable);
        let mut untracked = setup;
        untracked.phase_tracking = false;
        assert!(!verify_stabilizable(&target, &untracked).stabilizable);
    }

    #[test]
    fn inference_from_target_support() {
        let setup = MeasurementSetup::for_target(&two_comp(1, 4), None, None).unwrap();
        assert_eq!((setup.delta_n, setup.target_subspace), (3, 1));
        let fock = Ket::<f64>::basis(space(30), 2).unwrap();
        let setup = MeasurementSetup::for_target(&fock, None, None).unwrap();
        assert_eq!((setup.delta_n, setup.target_subspace), (5, 2));
        let phased = Ket::from_components(space(30), &[(1, cr(1.0)), (4, c(0.0, 1.0))]).unwrap();
        assert!(verify_stabilizable(&phased, &MeasurementSetup::for_target(&phased, None, None).unwrap()).stabilizable);
    }
}
