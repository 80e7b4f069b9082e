//! Spectral Galerkin solutions of the Poisson problem on `(−1, 1)²` in
//! tensor Babuška–Shen bases, multilevel detail decompositions, projection
//! norms between detail levels and saturation constants for polynomial data.

pub mod assembly;
pub mod basis1d;
pub mod cli;
pub mod error;
pub mod factor;
pub mod galerkin;
pub mod projnorm;
pub mod report;
pub mod saturation;
pub mod scalar;
pub mod tensor2d;
pub mod verify;

pub use error::{Error, Result};
