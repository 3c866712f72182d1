//! Reset/step environment server for external trainers.
//!
//! Each request is one JSON object; each gets exactly one JSON reply. The
//! wire format is described in `docs/bridge-protocol.md`.

mod transport;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::policy::reward;
use crate::simulator::{derive_seed, observe, Episode, EpisodeConfig, Simulator, TerminalStatus, ACTION_BOUND};
use crate::Complex64;

pub use transport::{read_frame, serve_framed, serve_lines, serve_tcp, write_frame, MAX_FRAME_LEN};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("malformed request: {0}")]
    Protocol(String),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("message id {got} does not follow {last}")]
    Id { got: u64, last: u64 },
    #[error("{0}")]
    State(String),
    #[error(transparent)]
    Simulation(#[from] crate::Error),
}

impl BridgeError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Protocol(_) => "protocol",
            Self::Version(_) => "version",
            Self::Id { .. } => "id",
            Self::State(_) => "state",
            Self::Simulation(_) => "simulation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Reset,
    Step,
    Spec,
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub v: u32,
    pub id: u64,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub payload: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetPayload {
    pub seed: Option<u64>,
    pub max_cycles: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepPayload {
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub protocol_version: u32,
    pub dim: usize,
    pub observation_len: usize,
    pub complex_observation: bool,
    pub action_dim: usize,
    pub action_low: f64,
    pub action_high: f64,
    pub max_cycles: usize,
    pub noisy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub cycle: usize,
    pub filter_fidelity: f64,
    pub true_fidelity: f64,
    /// `running`, `completed`, `guard_stop` or `numerical_failure`.
    pub status: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub v: u32,
    /// Request id, or null when it could not be read.
    pub id: Option<u64>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<StepInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<EnvSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Reply {
    fn ok(id: u64, kind: Kind) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            id: Some(id),
            ok: true,
            kind: Some(kind),
            observation: None,
            reward: None,
            done: None,
            info: None,
            spec: None,
            error: None,
        }
    }

    pub fn error(id: Option<u64>, err: &BridgeError) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            id,
            ok: false,
            kind: None,
            observation: None,
            reward: None,
            done: None,
            info: None,
            spec: None,
            error: Some(ErrorBody {
                code: err.code().into(),
                message: err.to_string(),
            }),
        }
    }
}

/// One environment. Holds at most one live episode.
#[derive(Debug, Clone)]
pub struct Session {
    base: EpisodeConfig,
    sim: Simulator,
    complex_mode: bool,
    episode: Option<Episode>,
    episodes_started: u64,
    last_id: Option<u64>,
    closed: bool,
}

fn status_name(status: Option<&TerminalStatus>) -> &'static str {
    match status {
        None => "running",
        Some(TerminalStatus::Completed) => "completed",
        Some(TerminalStatus::GuardStop { .. }) => "guard_stop",
        Some(TerminalStatus::NumericalFailure { .. }) => "numerical_failure",
    }
}

impl Session {
    pub fn new(cfg: EpisodeConfig) -> crate::Result<Self> {
        let complex_mode = !cfg.target.is_real_up_to_phase(1e-12);
        Ok(Self {
            sim: Simulator::new(cfg.clone())?,
            base: cfg,
            complex_mode,
            episode: None,
            episodes_started: 0,
            last_id: None,
            closed: false,
        })
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn spec(&self) -> EnvSpec {
        let cfg = self.sim.config();
        let dim = cfg.space.dim();
        EnvSpec {
            protocol_version: PROTOCOL_VERSION,
            dim,
            observation_len: if self.complex_mode { 2 * dim * dim } else { dim * dim },
            complex_observation: self.complex_mode,
            action_dim: if self.complex_mode { 2 } else { 1 },
            action_low: -ACTION_BOUND,
            action_high: ACTION_BOUND,
            max_cycles: cfg.max_cycles,
            noisy: cfg.noise.is_some(),
        }
    }

    /// Parses and answers one raw message. Never fails: problems become error
    /// replies and the session stays usable.
    pub fn handle_bytes(&mut self, raw: &[u8]) -> Reply {
        let value: Value = match serde_json::from_slice(raw) {
            Ok(v) => v,
            Err(e) => return Reply::error(None, &BridgeError::Protocol(e.to_string())),
        };
        let id = value.get("id").and_then(Value::as_u64);
        match serde_json::from_value::<Request>(value) {
            Ok(req) => self.handle(req),
            Err(e) => Reply::error(id, &BridgeError::Protocol(e.to_string())),
        }
    }

    pub fn handle(&mut self, req: Request) -> Reply {
        let id = req.id;
        match self.dispatch(req) {
            Ok(reply) => reply,
            Err(e) => Reply::error(Some(id), &e),
        }
    }

    fn dispatch(&mut self, req: Request) -> Result<Reply, BridgeError> {
        if req.v != PROTOCOL_VERSION {
            return Err(BridgeError::Version(req.v));
        }
        if let Some(last) = self.last_id {
            if req.id <= last {
                return Err(BridgeError::Id { got: req.id, last });
            }
        }
        self.last_id = Some(req.id);
        match req.kind {
            Kind::Spec => {
                let mut r = Reply::ok(req.id, Kind::Spec);
                r.spec = Some(self.spec());
                Ok(r)
            }
            Kind::Close => {
                self.closed = true;
                self.episode = None;
                Ok(Reply::ok(req.id, Kind::Close))
            }
            Kind::Reset => {
                let payload: ResetPayload = if req.payload.is_null() {
                    ResetPayload::default()
                } else {
                    serde_json::from_value(req.payload).map_err(|e| BridgeError::Protocol(e.to_string()))?
                };
                self.reset(req.id, payload)
            }
            Kind::Step => {
                let payload: StepPayload =
                    serde_json::from_value(req.payload).map_err(|e| BridgeError::Protocol(e.to_string()))?;
                self.step(req.id, payload)
            }
        }
    }

    fn reset(&mut self, id: u64, payload: ResetPayload) -> Result<Reply, BridgeError> {
        let max_cycles = payload.max_cycles.unwrap_or(self.base.max_cycles);
        if max_cycles != self.sim.config().max_cycles {
            let mut cfg = self.base.clone();
            cfg.max_cycles = max_cycles;
            self.sim = Simulator::new(cfg)?;
        }
        let seed = payload
            .seed
            .unwrap_or_else(|| derive_seed(self.base.seed, self.episodes_started));
        self.episodes_started += 1;
        let ep = self.sim.start(seed)?;
        let mut r = Reply::ok(id, Kind::Reset);
        r.done = Some(false);
        r.info = Some(self.info(&ep, seed));
        r.observation = Some(observe(ep.filter(), &self.sim.config().setup, self.complex_mode).values);
        self.episode = Some(ep);
        Ok(r)
    }

    fn info(&self, ep: &Episode, seed: u64) -> StepInfo {
        let cfg = self.sim.config();
        let tracked = ep.filter().tracked_target(&cfg.target, &cfg.setup);
        StepInfo {
            cycle: ep.cycle(),
            filter_fidelity: ep.filter().state().fidelity(&tracked),
            true_fidelity: ep.truth().fidelity(&tracked),
            status: status_name(ep.status()).into(),
            seed,
        }
    }

    fn step(&mut self, id: u64, payload: StepPayload) -> Result<Reply, BridgeError> {
        let action_dim = self.spec().action_dim;
        if payload.action.len() != action_dim {
            return Err(BridgeError::Protocol(format!(
                "action has {} entries, expected {action_dim}",
                payload.action.len()
            )));
        }
        if payload.action.iter().any(|a| !a.is_finite()) {
            return Err(BridgeError::Protocol("action entries must be finite".into()));
        }
        let alpha = Complex64::new(payload.action[0], payload.action.get(1).copied().unwrap_or(0.0));
        let Some(mut ep) = self.episode.take() else {
            return Err(BridgeError::State("no live episode; send reset".into()));
        };
        if ep.is_done() {
            self.episode = Some(ep);
            return Err(BridgeError::State("episode finished; send reset".into()));
        }
        let seed = ep.seed();
        // A numerical failure terminates the episode; it is reported through
        // the status field.
        let _ = self.sim.step(&mut ep, alpha);
        let info = self.info(&ep, seed);
        let mut r = Reply::ok(id, Kind::Step);
        r.reward = Some(reward(info.filter_fidelity));
        r.done = Some(ep.is_done());
        r.observation = Some(observe(ep.filter(), &self.sim.config().setup, self.complex_mode).values);
        r.info = Some(info);
        self.episode = Some(ep);
        Ok(r)
    }
}
