//! Simulation and control of measurement-based feedback that prepares and
//! stabilizes superpositions of cavity Fock states.
//!
//! The numerical kernels are generic over the scalar type ([`Real`], for `f32`
//! and `f64`). The aliases at the crate root fix the scalar to `f64`, which is
//! what the simulator, analysis and bridge layers use.

pub mod analysis;
pub mod bridge;
pub mod error;
pub mod filter;
pub mod channels;
pub mod fock;
pub mod lyapunov;
pub mod measurement;
pub mod policy;
pub mod scalar;
pub mod simulator;
pub mod states;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Complex64 = C<f64>;
pub type Ket = fock::Ket<f64>;
pub type DensityMatrix = fock::DensityMatrix<f64>;
pub type Operator = fock::Operator<f64>;
pub type CavityState = fock::CavityState<f64>;
pub type Displacer = fock::Displacer<f64>;
pub use fock::FockSpace;
