//! Named target states.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSpace, Ket};
use crate::scalar::{c, cis, cr, Real, C};

/// Mean photon number used for the multi-component cat presets.
pub const CAT_MEAN_PHOTON: f64 = 3.0;

/// A target state, either a named preset or explicit Fock coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Preset(Preset),
    /// `[n, re, im]` triples, normalized on construction.
    Coefficients { coefficients: Vec<(usize, f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Preset {
    /// `|n⟩`.
    Fock(usize),
    /// `(|n1⟩ + e^{iφ}|n2⟩)/√2`.
    TwoComp { n1: usize, n2: usize, phase: f64 },
    /// `(|1⟩ + |4⟩)/√2`.
    Benchmark,
    /// `(|0⟩ + √3|3⟩ + √3|6⟩ + |9⟩)/(2√2)`.
    Binomial0369,
    /// Three-component cat on `n ≡ 0 (mod 3)`.
    Cat3,
    /// Four-component cat on `n ≡ 1 (mod 4)`.
    Cat4,
}

impl Preset {
    /// Every preset listed for the final-fidelity comparison.
    pub const GALLERY: [Preset; 4] = [Preset::Benchmark, Preset::Binomial0369, Preset::Cat3, Preset::Cat4];

    /// `Δn` this preset is stabilized with when none is configured.
    pub fn default_delta_n(&self) -> Option<usize> {
        match self {
            Preset::Fock(n) => Some(2 * n + 1),
            _ => None,
        }
    }

    pub fn build<T: Real>(&self, space: FockSpace) -> Result<Ket<T>> {
        let h = T::lit(0.5f64.sqrt());
        match *self {
            Preset::Fock(n) => Ket::basis(space, n),
            Preset::TwoComp { n1, n2, phase } => {
                if n1 == n2 {
                    return Err(Error::InvalidParameter("two-comp needs distinct levels".into()));
                }
                Ket::from_components(space, &[(n1, cr(h)), (n2, cis(T::lit(phase)).scale(h))])
            }
            Preset::Benchmark => Ket::from_components(space, &[(1, cr(h)), (4, cr(h))]),
            Preset::Binomial0369 => {
                let s3 = T::lit(3f64.sqrt());
                Ket::from_components(
                    space,
                    &[(0, cr(T::one())), (3, cr(s3)), (6, cr(s3)), (9, cr(T::one()))],
                )
            }
            Preset::Cat3 => cat(space, 3, 0, CAT_MEAN_PHOTON),
            Preset::Cat4 => cat(space, 4, 1, CAT_MEAN_PHOTON),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Fock(n) => write!(f, "fock:{n}"),
            Preset::TwoComp { n1, n2, phase } if *phase == 0.0 => write!(f, "two-comp:{n1},{n2}"),
            Preset::TwoComp { n1, n2, phase } => write!(f, "two-comp:{n1},{n2},{phase}"),
            Preset::Benchmark => write!(f, "benchmark"),
            Preset::Binomial0369 => write!(f, "binomial-0369"),
            Preset::Cat3 => write!(f, "cat3"),
            Preset::Cat4 => write!(f, "cat4"),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown target preset {s:?}"));
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        match s.trim() {
            "benchmark" => return Ok(Preset::Benchmark),
            "binomial-0369" => return Ok(Preset::Binomial0369),
            "cat3" => return Ok(Preset::Cat3),
            "cat4" => return Ok(Preset::Cat4),
            _ => {}
        }
        if let Some(rest) = s.trim().strip_prefix("fock:") {
            return Ok(Preset::Fock(num(rest)?));
        }
        if let Some(rest) = s.trim().strip_prefix("two-comp:") {
            let parts: Vec<&str> = rest.split(',').collect();
            let phase = match parts.len() {
                2 => 0.0,
                3 => parts[2].trim().parse::<f64>().map_err(|_| bad())?,
                _ => return Err(bad()),
            };
            return Ok(Preset::TwoComp {
                n1: num(parts[0])?,
                n2: num(parts[1])?,
                phase,
            });
        }
        Err(bad())
    }
}

impl TryFrom<String> for Preset {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Preset> for String {
    fn from(p: Preset) -> String {
        p.to_string()
    }
}

impl TargetSpec {
    pub fn build<T: Real>(&self, space: FockSpace) -> Result<Ket<T>> {
        match self {
            TargetSpec::Preset(p) => p.build(space),
            TargetSpec::Coefficients { coefficients } => {
                let comps: Vec<(usize, C<T>)> = coefficients
                    .iter()
                    .map(|&(n, re, im)| (n, c(T::lit(re), T::lit(im))))
                    .collect();
                Ket::from_components(space, &comps)
            }
        }
    }

    pub fn default_delta_n(&self) -> Option<usize> {
        match self {
            TargetSpec::Preset(p) => p.default_delta_n(),
            TargetSpec::Coefficients { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            TargetSpec::Preset(p) => p.to_string(),
            TargetSpec::Coefficients { coefficients } => {
                let levels: Vec<String> = coefficients.iter().map(|c| c.0.to_string()).collect();
                format!("coefficients:{}", levels.join("+"))
            }
        }
    }
}

impl From<Preset> for TargetSpec {
    fn from(p: Preset) -> Self {
        TargetSpec::Preset(p)
    }
}

/// Cat-like state with amplitudes `∝ β^n/√n!` on `n ≡ residue (mod modulus)`,
/// with β chosen so the mean photon number equals `mean_photon`.
pub fn cat<T: Real>(space: FockSpace, modulus: usize, residue: usize, mean_photon: f64) -> Result<Ket<T>> {
    if modulus == 0 || residue >= modulus {
        return Err(Error::InvalidParameter("cat residue must be below the modulus".into()));
    }
    let levels: Vec<usize> = (residue..space.dim()).step_by(modulus).collect();
    let weights = |beta: f64| -> Vec<f64> {
        // log-space β^{2n}/n!
        let mut ln_fact = 0.0;
        let mut out = vec![0.0; space.dim()];
        for (n, w) in out.iter_mut().enumerate() {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            *w = (2.0 * n as f64 * beta.ln() - ln_fact).exp();
        }
        levels.iter().map(|&n| out[n]).collect()
    };
    let mean = |beta: f64| {
        let w = weights(beta);
        let z: f64 = w.iter().sum();
        levels.iter().zip(&w).map(|(&n, w)| n as f64 * w).sum::<f64>() / z
    };
    if mean_photon <= residue as f64 || mean(20.0) <= mean_photon {
        return Err(Error::InvalidParameter(format!(
            "mean photon {mean_photon} unreachable for this cat in {} levels",
            space.dim()
        )));
    }
    let (mut lo, mut hi) = (1e-6, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < mean_photon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    let w = weights(beta);
    let comps: Vec<(usize, C<T>)> = levels
        .iter()
        .zip(&w)
        .map(|(&n, w)| (n, cr(T::lit(w.sqrt()))))
        .collect();
    Ket::from_components(space, &comps)
}
