//! Multi-view sparse low-rank block model.
//!
//! Each observed view is modelled as `W_s = H_s C H_s + Θ_s + E_s` with a
//! shared consensus correlation matrix `C = Z Ω Zᵀ`, per-view node
//! heterogeneity `H_s`, sparse per-view deviations `Θ_s` and noise `E_s`.
//! The crate estimates `C`, `H_s` and `Θ_s` jointly, recovers the block
//! membership `Z` and group weights `Ω`, and ships the generators, baselines
//! and metrics needed to evaluate the estimator.

pub mod baselines;
pub mod clustering;
pub mod error;
pub mod fit;
pub mod init;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sppmi;

pub use error::{Error, Result};
