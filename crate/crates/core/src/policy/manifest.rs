//! JSON sidecar describing a weight file and the training setup behind it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Activation, Observation, PolicyNet};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tqc,
    Ppo,
}

/// Training hyperparameters. Fields that only one algorithm uses are `None`
/// for the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub algorithm: Algorithm,
    pub n_layers: u32,
    pub actor_width: u32,
    pub critic_width: Option<u32>,
    pub gamma: f64,
    pub batch_size: u32,
    pub activation: Activation,
    pub entropy_coef: Option<f64>,
    pub n_critics: Option<u32>,
    pub learning_rate: f64,
    pub tau: Option<f64>,
    pub n_steps: Option<u32>,
}

impl Hyperparameters {
    pub fn tqc() -> Self {
        Self {
            algorithm: Algorithm::Tqc,
            n_layers: 2,
            actor_width: 256,
            critic_width: Some(512),
            gamma: 0.95,
            batch_size: 1024,
            activation: Activation::Tanh,
            entropy_coef: Some(0.09),
            n_critics: Some(5),
            learning_rate: 1e-4,
            tau: Some(0.001),
            n_steps: None,
        }
    }

    pub fn ppo() -> Self {
        Self {
            algorithm: Algorithm::Ppo,
            n_layers: 2,
            actor_width: 256,
            critic_width: None,
            gamma: 0.95,
            batch_size: 256,
            activation: Activation::Tanh,
            entropy_coef: None,
            n_critics: None,
            learning_rate: 1e-4,
            tau: None,
            n_steps: Some(2048),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub dim: usize,
    pub complex_mode: bool,
    pub length: usize,
}

impl ObservationSpec {
    pub fn new(dim: usize, complex_mode: bool) -> Self {
        Self {
            dim,
            complex_mode,
            length: Observation::expected_len(dim, complex_mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyManifest {
    pub manifest_version: u32,
    pub weights_file: String,
    /// Lowercase hex SHA-256 of the whole weight file.
    pub weights_sha256: String,
    pub action_dim: usize,
    pub widths: Vec<usize>,
    pub observation: ObservationSpec,
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl PolicyManifest {
    pub fn describe(
        net: &PolicyNet,
        weights_file: &str,
        weights_bytes: &[u8],
        observation: ObservationSpec,
        hyperparameters: Hyperparameters,
    ) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            weights_file: weights_file.to_string(),
            weights_sha256: hex_digest(weights_bytes),
            action_dim: net.action_dim(),
            widths: net.widths(),
            observation,
            hyperparameters,
            target: None,
            config_hash: None,
        }
    }

    /// Confirms that `net` (loaded from `weights_bytes`) is the network this
    /// manifest describes.
    pub fn check(&self, net: &PolicyNet, weights_bytes: &[u8]) -> Result<()> {
        if hex_digest(weights_bytes) != self.weights_sha256 {
            return Err(Error::Checksum);
        }
        if net.action_dim() != self.action_dim || net.widths() != self.widths {
            return Err(Error::ShapeMismatch("manifest and weight file disagree on shapes".into()));
        }
        if net.input_dim() != self.observation.length {
            return Err(Error::ShapeMismatch(format!(
                "network takes {} inputs, manifest observation has {}",
                net.input_dim(),
                self.observation.length
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::write_policy;

    #[test]
    fn table_defaults() {
        let t = Hyperparameters::tqc();
        assert_eq!((t.n_layers, t.actor_width, t.critic_width), (2, 256, Some(512)));
        assert_eq!((t.gamma, t.batch_size, t.entropy_coef), (0.95, 1024, Some(0.09)));
        assert_eq!((t.n_critics, t.learning_rate, t.tau), (Some(5), 1e-4, Some(0.001)));
        let p = Hyperparameters::ppo();
        assert_eq!((p.n_layers, p.actor_width, p.n_steps, p.batch_size), (2, 256, Some(2048), 256));
        assert_eq!((p.gamma, p.learning_rate, p.activation), (0.95, 1e-4, Activation::Tanh));
    }

    #[test]
    fn manifest_round_trip_and_check() {
        let net = PolicyNet::zeros(&[900, 256, 256, 1], 1).unwrap();
        let bytes = write_policy(&net);
        let m = PolicyManifest::describe(&net, "actor.bin", &bytes, ObservationSpec::new(30, false), Hyperparameters::tqc());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("actor.json");
        m.save(&path).unwrap();
        let back = PolicyManifest::load(&path).unwrap();
        assert_eq!(back, m);
        back.check(&net, &bytes).unwrap();
        let mut tampered = bytes.clone();
        tampered[40] ^= 1;
        assert!(matches!(back.check(&net, &tampered), Err(Error::Checksum)));
        let other = PolicyNet::zeros(&[1800, 256, 256, 2], 2).unwrap();
        let other_bytes = write_policy(&other);
        let m2 = PolicyManifest { weights_sha256: hex_digest(&other_bytes), ..m };
        assert!(matches!(m2.check(&other, &other_bytes), Err(Error::ShapeMismatch(_))));
    }
}
