//! Resonances and survival amplitudes of 2x2 semiclassical matrix
//! Schrödinger operators with a confining and a dissociative channel.

pub mod discretize;
pub mod error;
pub mod evolve;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod resonance;

pub use discretize::{Grid, OperatorMatrix};
pub use error::{Error, Result};
pub use model::{AssumptionReport, ModelConfig};
pub use num_complex::Complex64 as C64;
