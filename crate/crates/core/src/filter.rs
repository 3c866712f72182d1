//! Recursive estimate of the cavity state from known displacements and
//! measurement reports.

use serde::{Deserialize, Serialize};

use crate::channels::{filter_decay_step, report_likelihoods, NoiseParams};
use crate::error::{Error, Result};
use crate::fock::{CavityState, DensityMatrix, Displacer, Ket};
use crate::measurement::{MeasurementOps, MeasurementSetup, Outcome, MIN_OUTCOME_PROBABILITY};
use crate::scalar::{c, Real, C};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState<T: Real> {
    state: CavityState<T>,
    measurements: usize,
}

impl<T: Real> FilterState<T> {
    pub fn new(state: CavityState<T>) -> Self {
        Self {
            state,
            measurements: 0,
        }
    }

    /// Estimate that has already absorbed `measurements` updates.
    pub fn from_parts(state: CavityState<T>, measurements: usize) -> Self {
        Self { state, measurements }
    }

    pub fn state(&self) -> &CavityState<T> {
        &self.state
    }

    pub fn density(&self) -> DensityMatrix<T> {
        self.state.to_density()
    }

    /// Number of measurement updates absorbed so far.
    pub fn step_index(&self) -> usize {
        self.measurements
    }

    /// Whether the tracked frame is currently flipped relative to the target.
    pub fn frame_flipped(&self, setup: &MeasurementSetup) -> bool {
        setup.phase_tracking && self.measurements % 2 == 1
    }

    /// Target in the frame the estimate currently lives in.
    pub fn tracked_target(&self, target: &Ket<T>, setup: &MeasurementSetup) -> Ket<T> {
        setup.tracked_target(target, self.measurements)
    }

    /// Fidelity to the target, evaluated in the tracked frame.
    pub fn fidelity(&self, target: &Ket<T>, setup: &MeasurementSetup) -> T {
        self.state.fidelity(&self.tracked_target(target, setup))
    }

    pub fn snapshot(&self) -> FilterSnapshot {
        FilterSnapshot::from_density(&self.density(), self.measurements)
    }
}

/// JSON-friendly copy of a filter estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSnapshot {
    pub dim: usize,
    pub step_index: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl FilterSnapshot {
    pub fn from_density<T: Real>(rho: &DensityMatrix<T>, step_index: usize) -> Self {
        let d = rho.dim();
        let m = rho.matrix();
        Self {
            dim: d,
            step_index,
            re: (0..d).map(|j| (0..d).map(|k| m[(j, k)].re.as_f64()).collect()).collect(),
            im: (0..d).map(|j| (0..d).map(|k| m[(j, k)].im.as_f64()).collect()).collect(),
        }
    }
}

/// `√n̄ · e^{iθ}`, with θ the relative phase of the first two populated
/// components of the target.
pub fn alpha_guess<T: Real>(target: &Ket<T>) -> C<T> {
    let amps = target.amplitudes();
    let tol = T::lit(1e-24);
    let mut populated = amps.iter().filter(|z| z.norm_sqr() > tol);
    let theta = match (populated.next(), populated.next()) {
        (Some(c1), Some(c2)) => {
            let rel = c2 * c1.conj();
            rel.im.atan2(rel.re)
        }
        _ => T::zero(),
    };
    let r = target.mean_photon().sqrt();
    c(r * theta.cos(), r * theta.sin())
}

/// Initial estimate `D(α_guess)|0⟩` together with `α_guess`.
pub fn init_episode<T: Real>(target: &Ket<T>, displacer: &Displacer<T>) -> Result<(FilterState<T>, C<T>)> {
    displacer.space().check(target.dim())?;
    let alpha = alpha_guess(target);
    let vacuum = Ket::basis(displacer.space(), 0)?;
    let start = displacer.apply_ket(&vacuum, alpha);
    Ok((FilterState::new(CavityState::Pure(start)), alpha))
}

/// `ρ ← 𝐃(α) ρ` with no measurement absorbed; the pre-measurement adjustment.
pub fn adjust<T: Real>(state: &FilterState<T>, alpha: C<T>, displacer: &Displacer<T>) -> Result<FilterState<T>> {
    Ok(FilterState {
        state: displacer.apply(&state.state, alpha)?,
        measurements: state.measurements,
    })
}

/// `ρ ← 𝐌_s 𝐃(α) ρ`.
pub fn ideal_step<T: Real>(
    state: &FilterState<T>,
    alpha: C<T>,
    outcome: Outcome,
    ops: &MeasurementOps<T>,
    displacer: &Displacer<T>,
) -> Result<FilterState<T>> {
    let displaced = displacer.apply(&state.state, alpha)?;
    Ok(FilterState {
        state: ops.collapse(&displaced, outcome)?,
        measurements: state.measurements + 1,
    })
}

/// `ρ ← 𝐏 𝐓 𝐃(α) ρ`: displacement, first-order decay, then the reported
/// outcome's Kraus branch mixed with the flipped branch by the readout
/// likelihoods.
pub fn noisy_step<T: Real>(
    state: &FilterState<T>,
    alpha: C<T>,
    reported: Outcome,
    ops: &MeasurementOps<T>,
    noise: &NoiseParams,
    displacer: &Displacer<T>,
) -> Result<FilterState<T>> {
    let displaced = displacer.apply(&state.state, alpha)?.into_density();
    let decayed = filter_decay_step(&displaced, noise)?;
    let mixed = CavityState::Mixed(decayed);
    let (keep, flip) = report_likelihoods(noise, reported);
    let CavityState::Mixed(kept) = ops.apply_unnormalized(&mixed, reported) else {
        unreachable!("mixed input stays mixed")
    };
    let mut total = kept.into_matrix().map(|z| z.scale(T::lit(keep)));
    if flip > 0.0 {
        let CavityState::Mixed(other) = ops.apply_unnormalized(&mixed, reported.flipped()) else {
            unreachable!("mixed input stays mixed")
        };
        total += other.into_matrix().map(|z| z.scale(T::lit(flip)));
    }
    let weight = total.trace().re.as_f64();
    if !(weight > MIN_OUTCOME_PROBABILITY) {
        return Err(Error::ZeroProbabilityOutcome {
            outcome: reported,
            probability: weight,
        });
    }
    let mut rho = DensityMatrix::from_matrix_unchecked(total);
    rho.hermitize_normalize()?;
    Ok(FilterState {
        state: CavityState::Mixed(rho),
        measurements: state.measurements + 1,
    })
}
