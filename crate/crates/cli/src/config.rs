//! Declarative experiment configuration (TOML), dotted-path overrides and the
//! reproducibility hash.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fockfb::channels::NoiseParams;
use fockfb::measurement::{MeasurementSetup, Parity};
use fockfb::policy::load_policy;
use fockfb::simulator::{Controller, EpisodeConfig, LyapunovController, PolicyController};
use fockfb::states::{Preset, TargetSpec};
use fockfb::{Complex64, FockSpace, Ket};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    /// Fock-space truncation.
    pub dim: usize,
    /// Preset name or `{ coefficients = [[n, re, im], ...] }`.
    pub state: TargetSpec,
    /// Known initial state; the coherent guess `D(α_guess)|0⟩` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<TargetSpec>,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            dim: 30,
            state: TargetSpec::Preset(Preset::Benchmark),
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSection {
    /// Subspace spacing; inferred from the target support when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_n: Option<usize>,
    /// φ0 rule; follows the parity of `delta_n` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parity: Option<Parity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub enabled: bool,
    /// Seconds.
    pub t_cav: f64,
    /// Seconds.
    pub t_cycle: f64,
    pub eta_e_given_g: f64,
    pub eta_g_given_e: f64,
    pub eps_probe: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let r = NoiseParams::reference();
        Self {
            enabled: false,
            t_cav: r.t_cav,
            t_cycle: r.t_cycle,
            eta_e_given_g: r.eta_e_given_g,
            eta_g_given_e: r.eta_g_given_e,
            eps_probe: r.eps_probe,
        }
    }
}

impl NoiseSection {
    pub fn params(&self) -> Result<NoiseParams> {
        Ok(NoiseParams::new(
            self.t_cav,
            self.t_cycle,
            self.eta_e_given_g,
            self.eta_g_given_e,
            self.eps_probe,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeSection {
    pub max_cycles: usize,
    pub guard_threshold: f64,
    /// Defaults to the top two levels of the space.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard_levels: Option<Vec<usize>>,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        Self {
            max_cycles: fockfb::simulator::DEFAULT_MAX_CYCLES,
            guard_threshold: fockfb::simulator::DEFAULT_GUARD_THRESHOLD,
            guard_levels: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Zero,
    Lyapunov,
    Policy,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: ControllerKind,
    pub alpha_max: f64,
    /// Portable weight file for `kind = "policy"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    /// `[re, im]` per cycle for `kind = "scripted"`.
    pub script: Vec<[f64; 2]>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Lyapunov,
            alpha_max: fockfb::lyapunov::DEFAULT_ALPHA_MAX,
            weights: None,
            script: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub n_traj: usize,
    pub workers: usize,
    /// Number of leading trajectories whose per-cycle rows are exported.
    pub log_trajectories: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            n_traj: 600,
            workers: 1,
            log_trajectories: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetSection,
    pub measurement: MeasurementSection,
    pub noise: NoiseSection,
    pub episode: EpisodeSection,
    pub controller: ControllerSection,
    pub run: RunSection,
    pub output: OutputSection,
}

fn parse_scalar(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Applies `section.key=value`; the value is read as a TOML literal and
    /// falls back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{assignment}` is not of the form path=value"))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        let mut root = toml::Value::try_from(&*self)?;
        let mut node = &mut root;
        for (i, key) in keys.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| anyhow!("`{}` is not a section", keys[..i].join(".")))?;
            if i + 1 == keys.len() {
                table.insert(key.to_string(), parse_scalar(raw.trim()));
                break;
            }
            node = table
                .get_mut(*key)
                .ok_or_else(|| anyhow!("unknown section `{}`", keys[..=i].join(".")))?;
        }
        *self = root.try_into().with_context(|| format!("applying override `{assignment}`"))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, with the fields that cannot change
    /// numeric results (worker count, output directory) blanked.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.run.workers = 0;
        canon.output.dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn space(&self) -> Result<FockSpace> {
        Ok(FockSpace::new(self.target.dim)?)
    }

    pub fn target_ket(&self) -> Result<Ket> {
        Ok(self.target.state.build(self.space()?)?)
    }

    pub fn setup(&self, target: &Ket) -> Result<MeasurementSetup> {
        let dn = self.measurement.delta_n.or(self.target.state.default_delta_n());
        if dn == Some(0) {
            bail!("measurement.delta_n must be at least 1");
        }
        Ok(MeasurementSetup::for_target(target, dn, self.measurement.parity)?)
    }

    pub fn episode_config(&self) -> Result<EpisodeConfig> {
        let target = self.target_ket()?;
        let setup = self.setup(&target)?;
        let mut cfg = EpisodeConfig::new(target, setup);
        cfg.max_cycles = self.episode.max_cycles;
        cfg.guard_threshold = self.episode.guard_threshold;
        if let Some(levels) = &self.episode.guard_levels {
            cfg.guard_levels = levels.clone();
        }
        if self.noise.enabled {
            cfg.noise = Some(self.noise.params()?);
        }
        cfg.seed = self.run.seed;
        if let Some(init) = &self.target.initial {
            cfg.initial = Some(init.build(cfg.space)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn controller(&self, cfg: &EpisodeConfig) -> Result<Controller> {
        Ok(match self.controller.kind {
            ControllerKind::Zero => Controller::Zero,
            ControllerKind::Lyapunov => Controller::Lyapunov(LyapunovController::new(
                &cfg.target,
                &cfg.setup,
                self.controller.alpha_max,
            )?),
            ControllerKind::Scripted => Controller::Scripted(
                self.controller
                    .script
                    .iter()
                    .map(|[re, im]| Complex64::new(*re, *im))
                    .collect(),
            ),
            ControllerKind::Policy => {
                let path = self
                    .controller
                    .weights
                    .as_ref()
                    .ok_or_else(|| anyhow!("controller.weights is required for a policy controller"))?;
                let net = load_policy(path).with_context(|| format!("loading {}", path.display()))?;
                let complex_mode = net.action_dim() == 2;
                Controller::Policy(PolicyController {
                    net: std::sync::Arc::new(net),
                    complex_mode,
                })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn coefficient_targets_round_trip() {
        let text = r#"
            [target]
            dim = 12
            state = { coefficients = [[0, 1, 0], [4, 0.5, 0.5]] }
            [measurement]
            delta_n = 4
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
        assert!(c.episode_config().unwrap().setup.phase_tracking);
    }

    #[test]
    fn overrides_by_dotted_path() {
        let mut c = ExperimentConfig::default();
        c.apply_override("noise.enabled=true").unwrap();
        c.apply_override("target.state=cat3").unwrap();
        c.apply_override("measurement.delta_n=3").unwrap();
        c.apply_override("run.seed = 17").unwrap();
        assert!(c.noise.enabled);
        assert_eq!(c.target.state, TargetSpec::Preset(Preset::Cat3));
        assert_eq!(c.measurement.delta_n, Some(3));
        assert_eq!(c.run.seed, 17);
        assert!(c.apply_override("noise.nonsense=1").is_err());
        assert!(c.apply_override("nosection.x=1").is_err());
        assert!(c.apply_override("missing-equals").is_err());
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.run.workers = 8;
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.run.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn zero_delta_n_is_rejected() {
        let mut c = ExperimentConfig::default();
        c.measurement.delta_n = Some(0);
        assert!(c.episode_config().is_err());
    }
}
