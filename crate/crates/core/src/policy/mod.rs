//! Reward, observation encoding and deterministic actor inference.

mod manifest;
mod weights;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::DensityMatrix;
use crate::scalar::{c, Real};

pub use manifest::{Algorithm, Hyperparameters, ObservationSpec, PolicyManifest};
pub use weights::{load_policy, read_policy, save_policy, write_policy, WEIGHTS_MAGIC, WEIGHTS_VERSION};

/// `r(F) = F⁴ + 4F²⁵`.
pub fn reward(fidelity: f64) -> f64 {
    fidelity.powi(4) + 4.0 * fidelity.powi(25)
}

/// `r′(F) = 4F³ + 100F²⁴`.
pub fn reward_derivative(fidelity: f64) -> f64 {
    4.0 * fidelity.powi(3) + 100.0 * fidelity.powi(24)
}

/// Flattened filter estimate handed to a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub dim: usize,
    pub complex_mode: bool,
    pub values: Vec<f64>,
}

impl Observation {
    pub fn expected_len(dim: usize, complex_mode: bool) -> usize {
        if complex_mode {
            2 * dim * dim
        } else {
            dim * dim
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Row-major real parts of ρ, followed by the imaginary parts in complex mode.
pub fn encode_observation<T: Real>(rho: &DensityMatrix<T>, complex_mode: bool) -> Observation {
    let d = rho.dim();
    let m = rho.matrix();
    let mut values = Vec::with_capacity(Observation::expected_len(d, complex_mode));
    for j in 0..d {
        for k in 0..d {
            values.push(m[(j, k)].re.as_f64());
        }
    }
    if complex_mode {
        for j in 0..d {
            for k in 0..d {
                values.push(m[(j, k)].im.as_f64());
            }
        }
    }
    Observation {
        dim: d,
        complex_mode,
        values,
    }
}

/// Inverse of [`encode_observation`]; real-mode observations decode to their
/// real part.
pub fn decode_observation(obs: &Observation) -> Result<DensityMatrix<f64>> {
    let d = obs.dim;
    if obs.len() != Observation::expected_len(d, obs.complex_mode) {
        return Err(Error::ShapeMismatch(format!(
            "observation of length {} does not describe a {d}-level state",
            obs.len()
        )));
    }
    let off = d * d;
    let m = DMatrix::from_fn(d, d, |j, k| {
        let im = if obs.complex_mode { obs.values[off + j * d + k] } else { 0.0 };
        c(obs.values[j * d + k], im)
    });
    DensityMatrix::from_matrix(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u32 {
        match self {
            Activation::Tanh => 0,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Tanh),
            other => Err(Error::Format(format!("unknown activation tag {other}"))),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }
}

/// One affine layer `y = Wx + b`, `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: DMatrix::zeros(outputs, inputs),
            bias: DVector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Deterministic actor: activation after every layer, the last one squashing
/// the outputs into `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    action_dim: usize,
    activation: Activation,
    layers: Vec<Layer>,
}

impl PolicyNet {
    pub fn new(action_dim: usize, activation: Activation, layers: Vec<Layer>) -> Result<Self> {
        if !(1..=2).contains(&action_dim) {
            return Err(Error::ShapeMismatch(format!("action_dim must be 1 or 2, got {action_dim}")));
        }
        let Some(last) = layers.last() else {
            return Err(Error::ShapeMismatch("network has no layers".into()));
        };
        if last.outputs() != action_dim {
            return Err(Error::ShapeMismatch(format!(
                "output width {} differs from action_dim {action_dim}",
                last.outputs()
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} emits {} values but layer {} takes {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::ShapeMismatch(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(Self {
            action_dim,
            activation,
            layers,
        })
    }

    /// All-zero network with the given widths (input first, output last).
    pub fn zeros(widths: &[usize], action_dim: usize) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::ShapeMismatch("need at least input and output widths".into()));
        }
        let layers = widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self::new(action_dim, Activation::Tanh, layers)
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    /// Input width followed by every layer's output width.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::outputs))
            .collect()
    }

    /// Raw squashed outputs, each in `[−1, 1]`.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} inputs, observation has {}",
                self.input_dim(),
                input.len()
            )));
        }
        let mut x = DVector::from_column_slice(input);
        for layer in &self.layers {
            x = &layer.weights * x + &layer.bias;
            x.apply(|v| *v = self.activation.apply(*v));
        }
        Ok(x.iter().copied().collect())
    }
}

/// Maps the actor output to α: `Re α` from the first action, `Im α` from the
/// second (zero in one-action mode).
pub fn act(net: &PolicyNet, obs: &Observation) -> Result<Complex64> {
    let out = net.forward(&obs.values)?;
    let im = if net.action_dim == 2 { out[1] } else { 0.0 };
    Ok(Complex64::new(out[0], im))
}
