//! Portable actor weight file.
//!
//! Layout, all integers `u32` little-endian and all reals `f64` little-endian:
//!
//! ```text
//! magic "FOCKPOL\0" | version | action_dim | activation tag | n_layers
//! widths[0..=n_layers]
//! per layer: weights (out × in, row-major) then bias (out)
//! SHA-256 of every preceding byte (32 bytes)
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::{Activation, Layer, PolicyNet};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: [u8; 8] = *b"FOCKPOL\0";
pub const WEIGHTS_VERSION: u32 = 1;

const CHECKSUM_LEN: usize = 32;
const MAX_LAYERS: usize = 64;
const MAX_WIDTH: usize = 1 << 20;

pub fn write_policy(net: &PolicyNet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHTS_MAGIC);
    let widths = net.widths();
    for v in [WEIGHTS_VERSION, net.action_dim() as u32, net.activation().tag(), net.layers().len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for w in &widths {
        out.extend_from_slice(&(*w as u32).to_le_bytes());
    }
    for layer in net.layers() {
        for r in 0..layer.outputs() {
            for c in 0..layer.inputs() {
                out.extend_from_slice(&layer.weights[(r, c)].to_le_bytes());
            }
        }
        for b in layer.bias.iter() {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("file ends inside {what} at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("four bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("eight bytes")))
    }
}

pub fn read_policy(bytes: &[u8]) -> Result<PolicyNet> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let action_dim = cur.u32("action_dim")? as usize;
    let activation = Activation::from_tag(cur.u32("activation")?)?;
    let n_layers = cur.u32("layer count")? as usize;
    if n_layers == 0 || n_layers > MAX_LAYERS {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let mut widths = Vec::with_capacity(n_layers + 1);
    for _ in 0..=n_layers {
        let w = cur.u32("widths")? as usize;
        if w == 0 || w > MAX_WIDTH {
            return Err(Error::Format(format!("implausible layer width {w}")));
        }
        widths.push(w);
    }
    let payload: usize = widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
    let expected = cur.pos + 8 * payload + CHECKSUM_LEN;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} bytes for the declared widths, found {}",
            bytes.len()
        )));
    }
    let body = &bytes[..expected - CHECKSUM_LEN];
    if Sha256::digest(body).as_slice() != &bytes[expected - CHECKSUM_LEN..] {
        return Err(Error::Checksum);
    }
    let mut layers = Vec::with_capacity(n_layers);
    for w in widths.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let mut weights = DMatrix::zeros(outputs, inputs);
        for r in 0..outputs {
            for c in 0..inputs {
                weights[(r, c)] = cur.f64("weights")?;
            }
        }
        let mut bias = DVector::zeros(outputs);
        for b in bias.iter_mut() {
            *b = cur.f64("bias")?;
        }
        layers.push(Layer { weights, bias });
    }
    PolicyNet::new(action_dim, activation, layers)
}

pub fn save_policy(net: &PolicyNet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_policy(net))?;
    Ok(())
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<PolicyNet> {
    read_policy(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(widths: &[usize], action_dim: usize, seed: u64) -> PolicyNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| Layer {
                weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-1.0..1.0)),
                bias: DVector::from_fn(w[1], |_, _| rng.random_range(-1.0..1.0)),
            })
            .collect();
        PolicyNet::new(action_dim, Activation::Tanh, layers).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = random_net(&[9, 16, 16, 2], 2, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("actor.bin");
        save_policy(&net, &path).unwrap();
        let back = load_policy(&path).unwrap();
        assert_eq!(back, net);
        for (a, b) in net.layers().iter().zip(back.layers()) {
            for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let bytes = write_policy(&random_net(&[4, 3, 1], 1, 1));
        for cut in [0, 5, 20, bytes.len() - 1] {
            assert!(matches!(read_policy(&bytes[..cut]), Err(Error::Format(_))), "cut={cut}");
        }
    }

    #[test]
    fn corrupted_payload_fails_the_checksum() {
        let mut bytes = write_policy(&random_net(&[4, 3, 1], 1, 1));
        let mid = bytes.len() - 40;
        bytes[mid] ^= 0x01;
        assert!(matches!(read_policy(&bytes), Err(Error::Checksum)));
    }

    #[test]
    fn header_action_dim_disagreeing_with_shapes() {
        let mut bytes = write_policy(&random_net(&[4, 3, 1], 1, 1));
        bytes[12..16].copy_from_slice(&2u32.to_le_bytes());
        let body_len = bytes.len() - CHECKSUM_LEN;
        let digest = Sha256::digest(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&digest);
        assert!(matches!(read_policy(&bytes), Err(Error::ShapeMismatch(_))));
    }
}
