//! Feedback-loop engine coupling the hidden cavity state, measurement
//! sampling, the filter and a controller.

mod batch;
mod reference;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{sample_readout, true_decay_step, NoiseParams};
use crate::error::{Error, Result};
use crate::filter::{adjust, ideal_step, init_episode, noisy_step, FilterState};
use crate::fock::FockSpace;
use crate::lyapunov::{build_context, LyapunovContext, NewtonStatus, DEFAULT_ALPHA_MAX};
use crate::measurement::{build_ops, subspace_population, MeasurementOps, MeasurementSetup, Outcome};
use crate::policy::{act, encode_observation, Observation, PolicyNet};
use crate::{CavityState, Complex64, DensityMatrix, Displacer, Ket};

pub use batch::{derive_seed, run_batch, with_workers, BatchOptions, BatchResult};
pub use reference::free_evolution_reference;

pub const DEFAULT_MAX_CYCLES: usize = 50;
pub const DEFAULT_GUARD_THRESHOLD: f64 = 0.02;
/// Largest magnitude of either quadrature of a displacement.
pub const ACTION_BOUND: f64 = 1.0;

/// Clips both quadratures into `[−1, 1]`.
pub fn clamp_action(alpha: Complex64) -> Complex64 {
    Complex64::new(
        alpha.re.clamp(-ACTION_BOUND, ACTION_BOUND),
        alpha.im.clamp(-ACTION_BOUND, ACTION_BOUND),
    )
}

/// Lyapunov controller holding one context per tracked frame.
#[derive(Debug, Clone)]
pub struct LyapunovController {
    frames: Vec<LyapunovContext<f64>>,
}

impl LyapunovController {
    pub fn new(target: &Ket, setup: &MeasurementSetup, alpha_max: f64) -> Result<Self> {
        let space = target.space();
        let mut frames = vec![build_context(target, space, alpha_max)?];
        if setup.phase_tracking {
            frames.push(build_context(&setup.tracked_target(target, 1), space, alpha_max)?);
        }
        Ok(Self { frames })
    }

    pub fn alpha_max(&self) -> f64 {
        self.frames[0].alpha_max()
    }

    pub fn context(&self, flipped: bool) -> &LyapunovContext<f64> {
        &self.frames[usize::from(flipped).min(self.frames.len() - 1)]
    }
}

#[derive(Debug, Clone)]
pub struct PolicyController {
    pub net: Arc<PolicyNet>,
    pub complex_mode: bool,
}

#[derive(Debug, Clone)]
pub enum Controller {
    Zero,
    Lyapunov(LyapunovController),
    Policy(PolicyController),
    /// Fixed α per cycle; zero once the sequence runs out.
    Scripted(Vec<Complex64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub alpha: Complex64,
    pub newton: Option<NewtonStatus>,
}

impl Controller {
    pub fn lyapunov(target: &Ket, setup: &MeasurementSetup) -> Result<Self> {
        Ok(Self::Lyapunov(LyapunovController::new(target, setup, DEFAULT_ALPHA_MAX)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Lyapunov(_) => "lyapunov",
            Self::Policy(_) => "policy",
            Self::Scripted(_) => "scripted",
        }
    }

    /// Chooses the displacement for `cycle` from the filter estimate alone.
    pub fn decide(&self, filter: &FilterState<f64>, setup: &MeasurementSetup, cycle: usize) -> Result<Decision> {
        let (alpha, newton) = match self {
            Self::Zero => (Complex64::new(0.0, 0.0), None),
            Self::Scripted(seq) => (seq.get(cycle).copied().unwrap_or_default(), None),
            Self::Lyapunov(l) => {
                let step = l.context(filter.frame_flipped(setup)).newton(filter.state());
                (step.alpha, Some(step.status))
            }
            Self::Policy(p) => (act(&p.net, &observe(filter, setup, p.complex_mode))?, None),
        };
        if !(alpha.re.is_finite() && alpha.im.is_finite()) {
            return Err(Error::NumericalFailure(format!("controller produced {alpha}")));
        }
        Ok(Decision {
            alpha: clamp_action(alpha),
            newton,
        })
    }
}

/// Filter estimate as seen by a policy: mapped back to the target's own frame
/// and flattened.
pub fn observe(filter: &FilterState<f64>, setup: &MeasurementSetup, complex_mode: bool) -> Observation {
    let rho = filter.density();
    if !filter.frame_flipped(setup) {
        return encode_observation(&rho, complex_mode);
    }
    let s = setup.frame_signs(rho.dim());
    let m = rho.matrix().map_with_location(|j, k, z| z * (s[j] * s[k]));
    encode_observation(&DensityMatrix::from_matrix(m).expect("frame change keeps ρ valid"), complex_mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub space: FockSpace,
    pub max_cycles: usize,
    pub guard_levels: Vec<usize>,
    pub guard_threshold: f64,
    pub target: Ket,
    pub setup: MeasurementSetup,
    pub noise: Option<NoiseParams>,
    pub seed: u64,
    /// Known starting state; `D(α_guess)|0⟩` when absent.
    pub initial: Option<Ket>,
}

impl EpisodeConfig {
    pub fn new(target: Ket, setup: MeasurementSetup) -> Self {
        let space = target.space();
        Self {
            space,
            max_cycles: DEFAULT_MAX_CYCLES,
            guard_levels: space.edge_levels().to_vec(),
            guard_threshold: DEFAULT_GUARD_THRESHOLD,
            target,
            setup,
            noise: None,
            seed: 0,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.check(self.target.dim())?;
        if let Some(init) = &self.initial {
            self.space.check(init.dim())?;
        }
        if self.max_cycles == 0 {
            return Err(Error::InvalidParameter("max_cycles must be at least 1".into()));
        }
        if !(self.guard_threshold > 0.0 && self.guard_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "guard_threshold = {} outside (0, 1)",
                self.guard_threshold
            )));
        }
        if let Some(&n) = self.guard_levels.iter().find(|&&n| n >= self.space.dim()) {
            return Err(Error::InvalidParameter(format!("guard level {n} outside the space")));
        }
        let pops = self.target.populations();
        let on_guard = self.guard_levels.iter().fold(0.0, |acc, &n| acc + pops[n]);
        if on_guard >= self.guard_threshold {
            return Err(Error::InvalidParameter(format!(
                "target holds population {on_guard:.3e} on the guard levels, at or above the threshold"
            )));
        }
        if self.setup.delta_n == 0 || self.setup.target_subspace >= self.setup.delta_n {
            return Err(Error::InvalidParameter("inconsistent measurement setup".into()));
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub cycle: usize,
    pub alpha_re: f64,
    pub alpha_im: f64,
    /// Absent on cycle 0, which only displaces.
    pub true_outcome: Option<Outcome>,
    pub reported_outcome: Option<Outcome>,
    pub filter_fidelity: f64,
    pub true_fidelity: f64,
    pub jump: bool,
    /// Population of the true state in each residue class `n mod Δn`.
    pub subspace_populations: Vec<f64>,
    /// Largest elementwise difference between filter and true density.
    pub filter_truth_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    Completed,
    GuardStop,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalStatus {
    Completed,
    GuardStop { cycle: usize, population: f64 },
    NumericalFailure { cycle: usize, message: String },
}

impl TerminalStatus {
    pub fn kind(&self) -> TerminalKind {
        match self {
            Self::Completed => TerminalKind::Completed,
            Self::GuardStop { .. } => TerminalKind::GuardStop,
            Self::NumericalFailure { .. } => TerminalKind::NumericalFailure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub target_subspace: usize,
    pub initial_true_fidelity: f64,
    pub initial_filter_fidelity: f64,
    pub rows: Vec<CycleRow>,
    pub status: TerminalStatus,
}

/// Fidelity curves and terminal facts of one episode, enough for statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSeries {
    pub true_fidelity: Vec<f64>,
    pub filter_fidelity: Vec<f64>,
    pub final_subspace_population: f64,
    pub status: TerminalKind,
    pub jumps: usize,
}

impl EpisodeRecord {
    pub fn final_true_fidelity(&self) -> f64 {
        self.rows.last().map_or(self.initial_true_fidelity, |r| r.true_fidelity)
    }

    pub fn final_filter_fidelity(&self) -> f64 {
        self.rows.last().map_or(self.initial_filter_fidelity, |r| r.filter_fidelity)
    }

    pub fn max_filter_truth_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.filter_truth_gap).fold(0.0, f64::max)
    }

    pub fn series(&self) -> EpisodeSeries {
        let (true_fidelity, filter_fidelity) = if self.rows.is_empty() {
            (vec![self.initial_true_fidelity], vec![self.initial_filter_fidelity])
        } else {
            (
                self.rows.iter().map(|r| r.true_fidelity).collect(),
                self.rows.iter().map(|r| r.filter_fidelity).collect(),
            )
        };
        EpisodeSeries {
            true_fidelity,
            filter_fidelity,
            final_subspace_population: self
                .rows
                .last()
                .and_then(|r| r.subspace_populations.get(self.target_subspace).copied())
                .unwrap_or(f64::NAN),
            status: self.status.kind(),
            jumps: self.rows.iter().filter(|r| r.jump).count(),
        }
    }
}

/// In-flight episode. Advanced one cycle at a time by [`Simulator::step`].
#[derive(Debug, Clone)]
pub struct Episode {
    rng: ChaCha8Rng,
    truth: CavityState,
    filter: FilterState<f64>,
    cycle: usize,
    record: EpisodeRecord,
    done: bool,
}

impl Episode {
    pub fn filter(&self) -> &FilterState<f64> {
        &self.filter
    }

    pub fn truth(&self) -> &CavityState {
        &self.truth
    }

    pub fn seed(&self) -> u64 {
        self.record.seed
    }

    /// Index of the cycle the next step will execute.
    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn status(&self) -> Option<&TerminalStatus> {
        self.done.then_some(&self.record.status)
    }

    pub fn rows(&self) -> &[CycleRow] {
        &self.record.rows
    }

    pub fn into_record(self) -> EpisodeRecord {
        self.record
    }
}

/// Precomputed operators for one episode configuration; shareable across
/// threads.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: EpisodeConfig,
    displacer: Displacer,
    ops: MeasurementOps<f64>,
}

impl Simulator {
    pub fn new(cfg: EpisodeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            displacer: Displacer::new(cfg.space),
            ops: build_ops(&cfg.setup, cfg.space),
            cfg,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn displacer(&self) -> &Displacer {
        &self.displacer
    }

    pub fn ops(&self) -> &MeasurementOps<f64> {
        &self.ops
    }

    pub fn start(&self, seed: u64) -> Result<Episode> {
        let cfg = &self.cfg;
        let (filter, truth) = match &cfg.initial {
            Some(init) => {
                let s = CavityState::Pure(init.clone());
                (FilterState::new(s.clone()), s)
            }
            None => {
                let (f, _) = init_episode(&cfg.target, &self.displacer)?;
                let truth = f.state().clone();
                (f, truth)
            }
        };
        let record = EpisodeRecord {
            seed,
            target_subspace: cfg.setup.target_subspace,
            initial_true_fidelity: truth.fidelity(&cfg.target),
            initial_filter_fidelity: filter.fidelity(&cfg.target, &cfg.setup),
            rows: Vec::new(),
            status: TerminalStatus::Completed,
        };
        Ok(Episode {
            rng: ChaCha8Rng::seed_from_u64(seed),
            truth,
            filter,
            cycle: 0,
            record,
            done: false,
        })
    }

    fn guard_population(&self, state: &CavityState) -> f64 {
        let pops = state.populations();
        self.cfg.guard_levels.iter().map(|&n| pops[n]).sum()
    }

    /// Runs one cycle with displacement `alpha` (clamped to the action box).
    /// Returns the logged row, or `None` when the guard stopped the episode.
    pub fn step<'e>(&self, ep: &'e mut Episode, alpha: Complex64) -> Result<Option<&'e CycleRow>> {
        if ep.done {
            return Err(Error::InvalidParameter("episode already finished".into()));
        }
        let cycle = ep.cycle;
        let alpha = clamp_action(alpha);
        match self.advance(ep, alpha) {
            Ok(true) => {
                ep.cycle += 1;
                if ep.cycle > self.cfg.max_cycles {
                    ep.done = true;
                }
                Ok(ep.record.rows.last())
            }
            Ok(false) => Ok(None),
            Err(e) => {
                ep.done = true;
                ep.record.status = TerminalStatus::NumericalFailure {
                    cycle,
                    message: e.to_string(),
                };
                Err(e)
            }
        }
    }

    fn advance(&self, ep: &mut Episode, alpha: Complex64) -> Result<bool> {
        let cfg = &self.cfg;
        let displaced = self.displacer.apply(&ep.truth, alpha)?;
        let guard = self.guard_population(&displaced);
        if guard > cfg.guard_threshold {
            ep.done = true;
            ep.record.status = TerminalStatus::GuardStop {
                cycle: ep.cycle,
                population: guard,
            };
            return Ok(false);
        }
        let (mut outcomes, mut jump) = (None, false);
        if ep.cycle == 0 {
            ep.truth = displaced;
            ep.filter = adjust(&ep.filter, alpha, &self.displacer)?;
        } else {
            let decayed = match &cfg.noise {
                Some(noise) => {
                    let (s, j) = true_decay_step(&displaced, noise, &mut ep.rng)?;
                    jump = j;
                    s
                }
                None => displaced,
            };
            let (p_g, _) = self.ops.probs(&decayed);
            let truth_outcome = if ep.rng.random::<f64>() < p_g { Outcome::G } else { Outcome::E };
            ep.truth = self.ops.collapse(&decayed, truth_outcome)?;
            ep.filter = match &cfg.noise {
                Some(noise) => {
                    let reported = sample_readout(truth_outcome, noise, &mut ep.rng);
                    outcomes = Some((truth_outcome, reported));
                    noisy_step(&ep.filter, alpha, reported, &self.ops, noise, &self.displacer)?
                }
                None => {
                    outcomes = Some((truth_outcome, truth_outcome));
                    ideal_step(&ep.filter, alpha, truth_outcome, &self.ops, &self.displacer)?
                }
            };
        }
        let tracked = ep.filter.tracked_target(&cfg.target, &cfg.setup);
        let pops = ep.truth.populations();
        let dn = cfg.setup.delta_n;
        ep.record.rows.push(CycleRow {
            cycle: ep.cycle,
            alpha_re: alpha.re,
            alpha_im: alpha.im,
            true_outcome: outcomes.map(|o| o.0),
            reported_outcome: outcomes.map(|o| o.1),
            filter_fidelity: ep.filter.state().fidelity(&tracked),
            true_fidelity: ep.truth.fidelity(&tracked),
            jump,
            subspace_populations: (0..dn).map(|m| subspace_population(&pops, m, dn)).collect(),
            filter_truth_gap: ep.filter.state().max_abs_diff(&ep.truth),
        });
        Ok(true)
    }

    /// Full episode under `controller` with the given seed.
    pub fn run(&self, controller: &Controller, seed: u64) -> EpisodeRecord {
        let mut ep = match self.start(seed) {
            Ok(ep) => ep,
            Err(e) => {
                return EpisodeRecord {
                    seed,
                    target_subspace: self.cfg.setup.target_subspace,
                    initial_true_fidelity: f64::NAN,
                    initial_filter_fidelity: f64::NAN,
                    rows: Vec::new(),
                    status: TerminalStatus::NumericalFailure {
                        cycle: 0,
                        message: e.to_string(),
                    },
                }
            }
        };
        while !ep.done {
            let decision = match controller.decide(&ep.filter, &self.cfg.setup, ep.cycle) {
                Ok(d) => d,
                Err(e) => {
                    ep.done = true;
                    ep.record.status = TerminalStatus::NumericalFailure {
                        cycle: ep.cycle,
                        message: e.to_string(),
                    };
                    break;
                }
            };
            if self.step(&mut ep, decision.alpha).is_err() {
                break;
            }
        }
        ep.record
    }
}

/// One episode with `cfg.seed`.
pub fn run_episode(cfg: &EpisodeConfig, controller: &Controller) -> Result<EpisodeRecord> {
    Ok(Simulator::new(cfg.clone())?.run(controller, cfg.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::random::random_real_ket;
    use crate::measurement::build_setup;
    use crate::states::Preset;

    fn benchmark_cfg() -> EpisodeConfig {
        let space = FockSpace::new(30).unwrap();
        let target: Ket = Preset::Benchmark.build(space).unwrap();
        let setup = MeasurementSetup::for_target(&target, None, None).unwrap();
        EpisodeConfig::new(target, setup)
    }

    #[test]
    fn action_box() {
        let a = clamp_action(Complex64::new(3.0, -0.5));
        assert_eq!(a, Complex64::new(1.0, -0.5));
    }

    #[test]
    fn config_validation() {
        let mut cfg = benchmark_cfg();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.guard_levels, vec![28, 29]);
        cfg.max_cycles = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = benchmark_cfg();
        cfg.guard_threshold = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = benchmark_cfg();
        cfg.guard_levels = vec![4];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zeno_fixed_point_under_zero_control() {
        let mut cfg = benchmark_cfg();
        let space = cfg.space;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sub: Vec<usize> = vec![1, 4, 7, 10];
        let init = random_real_ket::<f64, _>(space, &sub, &mut rng);
        cfg.initial = Some(init);
        let rec = run_episode(&cfg, &Controller::Zero).unwrap();
        assert_eq!(rec.status, TerminalStatus::Completed);
        assert_eq!(rec.rows.len(), cfg.max_cycles + 1);
        for r in &rec.rows {
            assert!((r.true_fidelity - rec.initial_true_fidelity).abs() < 1e-10);
            assert!((r.subspace_populations[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_filter_is_exact_and_seeded() {
        let cfg = benchmark_cfg();
        let ctl = Controller::lyapunov(&cfg.target, &cfg.setup).unwrap();
        let a = run_episode(&cfg, &ctl).unwrap();
        let b = run_episode(&cfg, &ctl).unwrap();
        assert_eq!(a, b);
        assert!(a.max_filter_truth_gap() < 1e-9);
        assert!(a.rows[0].true_outcome.is_none());
        assert!(a.rows[1].true_outcome.is_some());
    }

    #[test]
    fn guard_stops_runaway_displacement() {
        let mut cfg = benchmark_cfg();
        cfg.max_cycles = 200;
        let ctl = Controller::Scripted(vec![Complex64::new(1.0, 0.0); 201]);
        let sim = Simulator::new(cfg.clone()).unwrap();
        let rec = sim.run(&ctl, 1);
        let TerminalStatus::GuardStop { population, .. } = rec.status else {
            panic!("expected guard stop, got {:?}", rec.status)
        };
        assert!(population > cfg.guard_threshold);
        let mut ep = sim.start(1).unwrap();
        for r in &rec.rows {
            sim.step(&mut ep, Complex64::new(r.alpha_re, r.alpha_im)).unwrap();
            let edge: f64 = cfg.guard_levels.iter().map(|&n| ep.truth().populations()[n]).sum();
            assert!(edge <= cfg.guard_threshold);
        }
    }

    #[test]
    fn outcome_frequencies_match_probabilities() {
        let cfg = benchmark_cfg();
        let sim = Simulator::new(cfg).unwrap();
        let mut ep0 = sim.start(0).unwrap();
        sim.step(&mut ep0, Complex64::new(0.0, 0.0)).unwrap();
        let alpha = Complex64::new(0.2, 0.1);
        let (p_g, _) = sim.ops().probs(&sim.displacer().apply(ep0.truth(), alpha).unwrap());
        let n = 100_000;
        let mut g = 0usize;
        for i in 0..n {
            let mut ep = ep0.clone();
            ep.rng = ChaCha8Rng::seed_from_u64(derive_seed(9, i as u64));
            let row = sim.step(&mut ep, alpha).unwrap().unwrap();
            g += usize::from(row.true_outcome == Some(Outcome::G));
        }
        let sigma = (p_g * (1.0 - p_g) / n as f64).sqrt();
        assert!((g as f64 / n as f64 - p_g).abs() < 3.0 * sigma);
    }

    #[test]
    fn noisy_episode_records_reported_outcomes() {
        let mut cfg = benchmark_cfg();
        cfg.noise = Some(NoiseParams::reference());
        let ctl = Controller::lyapunov(&cfg.target, &cfg.setup).unwrap();
        let rec = run_episode(&cfg, &ctl).unwrap();
        assert_eq!(rec.status, TerminalStatus::Completed);
        assert!(rec.rows[1..].iter().all(|r| r.reported_outcome.is_some()));
        assert_eq!(rec, run_episode(&cfg, &ctl).unwrap());
    }

    #[test]
    fn even_target_tracks_frame() {
        let space = FockSpace::new(30).unwrap();
        let target: Ket = Preset::TwoComp { n1: 0, n2: 4, phase: 0.0 }.build(space).unwrap();
        let setup = build_setup(4, 0, None).unwrap();
        assert!(setup.phase_tracking);
        let mut cfg = EpisodeConfig::new(target.clone(), setup);
        cfg.initial = Some(target);
        let rec = run_episode(&cfg, &Controller::Zero).unwrap();
        for r in &rec.rows {
            assert!((r.true_fidelity - 1.0).abs() < 1e-10, "cycle {}: {}", r.cycle, r.true_fidelity);
        }
    }
}
