//! Photon loss and readout errors.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{CavityState, DensityMatrix};
use crate::measurement::Outcome;
use crate::scalar::{czero, Real, C};

/// Largest `t_cycle / t_cav` for which the one-decision-per-cycle model is
/// accepted.
pub const MAX_DECAY_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Cavity lifetime `T_cav = 1/κ` in seconds.
    pub t_cav: f64,
    /// Duration of one feedback cycle in seconds.
    pub t_cycle: f64,
    pub eta_e_given_g: f64,
    pub eta_g_given_e: f64,
    /// Effective probe-qubit error, added to both assignment errors.
    #[serde(default)]
    pub eps_probe: f64,
}

impl NoiseParams {
    pub fn new(
        t_cav: f64,
        t_cycle: f64,
        eta_e_given_g: f64,
        eta_g_given_e: f64,
        eps_probe: f64,
    ) -> Result<Self> {
        let out = Self {
            t_cav,
            t_cycle,
            eta_e_given_g,
            eta_g_given_e,
            eps_probe,
        };
        out.validate()?;
        Ok(out)
    }

    /// 1 ms cavity, 1 µs cycle, η_{e|g} = 0.01, η_{g|e} = 0.02.
    pub fn reference() -> Self {
        Self {
            t_cav: 1e-3,
            t_cycle: 1e-6,
            eta_e_given_g: 0.01,
            eta_g_given_e: 0.02,
            eps_probe: 0.0,
        }
    }

    /// Decay only, perfect readout.
    pub fn decay_only(t_cav: f64, t_cycle: f64) -> Self {
        Self {
            t_cav,
            t_cycle,
            eta_e_given_g: 0.0,
            eta_g_given_e: 0.0,
            eps_probe: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("eta_e_given_g", self.eta_e_given_g),
            ("eta_g_given_e", self.eta_g_given_e),
            ("eps_probe", self.eps_probe),
        ];
        for (name, p) in probs {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside [0, 1)")));
            }
        }
        if !(self.t_cav > 0.0) {
            return Err(Error::InvalidParameter(format!("t_cav = {} must be positive", self.t_cav)));
        }
        if !(self.t_cycle > 0.0) || !self.t_cycle.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "t_cycle = {} must be positive and finite",
                self.t_cycle
            )));
        }
        if self.ratio() >= MAX_DECAY_RATIO {
            return Err(Error::InvalidParameter(format!(
                "t_cycle/t_cav = {} must stay below {MAX_DECAY_RATIO}",
                self.ratio()
            )));
        }
        for (name, p) in [("e|g", self.flip_e_given_g()), ("g|e", self.flip_g_given_e())] {
            if p >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "effective flip probability {name} = {p} reaches 1"
                )));
            }
        }
        Ok(())
    }

    /// `κΔt = t_cycle / t_cav`.
    pub fn ratio(&self) -> f64 {
        self.t_cycle / self.t_cav
    }

    pub fn flip_e_given_g(&self) -> f64 {
        self.eta_e_given_g + self.eps_probe
    }

    pub fn flip_g_given_e(&self) -> f64 {
        self.eta_g_given_e + self.eps_probe
    }

    /// Probability that a true `outcome` is reported flipped.
    pub fn flip_probability(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::G => self.flip_e_given_g(),
            Outcome::E => self.flip_g_given_e(),
        }
    }

    pub fn has_readout_error(&self) -> bool {
        self.flip_e_given_g() > 0.0 || self.flip_g_given_e() > 0.0
    }
}

/// `κ(aρa† − ½{N, ρ})`.
pub fn lindblad_rhs<T: Real>(rho: &DensityMatrix<T>, kappa: T) -> DMatrix<C<T>> {
    let m = rho.matrix();
    let d = rho.dim();
    let sq: Vec<T> = (0..=d).map(|n| T::lit(n as f64).sqrt()).collect();
    let half = T::lit(0.5);
    DMatrix::from_fn(d, d, |j, k| {
        let jump = if j + 1 < d && k + 1 < d {
            m[(j + 1, k + 1)].scale(sq[j + 1] * sq[k + 1])
        } else {
            czero()
        };
        (jump - m[(j, k)].scale(half * T::lit((j + k) as f64))).scale(kappa)
    })
}

/// `(1 + Δt 𝐋) ρ` with `κ = 1/T_cav`, renormalized.
pub fn filter_decay_step<T: Real>(rho: &DensityMatrix<T>, noise: &NoiseParams) -> Result<DensityMatrix<T>> {
    let ratio = noise.ratio();
    if ratio == 0.0 {
        return Ok(rho.clone());
    }
    let delta = lindblad_rhs(rho, T::lit(ratio));
    let mut out = DensityMatrix::from_matrix_unchecked(rho.matrix() + delta);
    out.hermitize_normalize()?;
    Ok(out)
}

/// One-cycle jump unraveling of photon loss.
///
/// The no-jump branch applies `K0 = e^{−κΔt N/2}`; the jump branch applies
/// `K0 a`, the exact single-jump map up to normalization. Returns the new
/// state and whether a jump occurred.
pub fn true_decay_step<T: Real, R: Rng + ?Sized>(
    state: &CavityState<T>,
    noise: &NoiseParams,
    rng: &mut R,
) -> Result<(CavityState<T>, bool)> {
    let ratio = noise.ratio();
    if ratio == 0.0 {
        return Ok((state.clone(), false));
    }
    let d = state.dim();
    let k0: Vec<T> = (0..d).map(|n| T::lit((-0.5 * ratio * n as f64).exp())).collect();
    let sq: Vec<T> = (0..d).map(|n| T::lit(n as f64).sqrt()).collect();
    let (mut no_jump, mut jumped) = match state {
        CavityState::Pure(k) => {
            let psi = k.amplitudes();
            let mut nj = k.clone();
            let mut j = k.clone();
            for n in 0..d {
                nj.amplitudes_mut()[n] = psi[n].scale(k0[n]);
                j.amplitudes_mut()[n] = if n + 1 < d {
                    psi[n + 1].scale(k0[n] * sq[n + 1])
                } else {
                    czero()
                };
            }
            (CavityState::Pure(nj), CavityState::Pure(j))
        }
        CavityState::Mixed(r) => {
            let m = r.matrix();
            let nj = DMatrix::from_fn(d, d, |j, k| m[(j, k)].scale(k0[j] * k0[k]));
            let jm = DMatrix::from_fn(d, d, |j, k| {
                if j + 1 < d && k + 1 < d {
                    m[(j + 1, k + 1)].scale(k0[j] * k0[k] * sq[j + 1] * sq[k + 1])
                } else {
                    czero()
                }
            });
            (
                CavityState::Mixed(DensityMatrix::from_matrix_unchecked(nj)),
                CavityState::Mixed(DensityMatrix::from_matrix_unchecked(jm)),
            )
        }
    };
    let p_stay = no_jump.trace().re.as_f64() / state.trace().re.as_f64();
    let p_jump = (1.0 - p_stay).max(0.0);
    let u: f64 = rng.random();
    if u < p_jump {
        jumped.normalize()?;
        Ok((jumped, true))
    } else {
        no_jump.normalize()?;
        Ok((no_jump, false))
    }
}

/// Jump probability `1 − ‖K0ψ‖²` of one cycle, from level populations.
pub fn jump_probability<T: Real>(populations: &[T], noise: &NoiseParams) -> f64 {
    let ratio = noise.ratio();
    1.0 - populations
        .iter()
        .enumerate()
        .map(|(n, p)| p.as_f64() * (-ratio * n as f64).exp())
        .sum::<f64>()
}

/// Applies assignment errors to a true outcome.
pub fn sample_readout<R: Rng + ?Sized>(true_outcome: Outcome, noise: &NoiseParams, rng: &mut R) -> Outcome {
    let p = noise.flip_probability(true_outcome);
    if p > 0.0 && rng.random::<f64>() < p {
        true_outcome.flipped()
    } else {
        true_outcome
    }
}

/// Posterior `(w_correct, w_flipped)` that the reported outcome was (not)
/// the true one, given prior outcome probabilities.
pub fn bayes_weights(p_g: f64, p_e: f64, noise: &NoiseParams, reported: Outcome) -> (f64, f64) {
    let (p_true, p_other) = match reported {
        Outcome::G => (p_g, p_e),
        Outcome::E => (p_e, p_g),
    };
    // P(report | true) and P(report | other)
    let keep = 1.0 - noise.flip_probability(reported);
    let flip = noise.flip_probability(reported.flipped());
    let correct = keep * p_true;
    let flipped = flip * p_other;
    let total = correct + flipped;
    if !(total > 0.0) {
        return (1.0, 0.0);
    }
    let w_flipped = (flipped / total).clamp(0.0, 1.0);
    (1.0 - w_flipped, w_flipped)
}

/// Likelihood factors `(P(report | reported), P(report | other))` used to
/// weight the two Kraus branches in the noisy filter.
pub fn report_likelihoods(noise: &NoiseParams, reported: Outcome) -> (f64, f64) {
    (
        1.0 - noise.flip_probability(reported),
        noise.flip_probability(reported.flipped()),
    )
}
