//! Uncertainty-aware multi-view representation learning.
//!
//! Each sample owns a trainable latent code. Per-view decoder networks
//! reconstruct every view from that code and also predict a per-sample
//! noise scale σ. The heteroscedastic Gaussian objective then lets clean
//! observations dominate the fit while noisy ones are down-weighted.
//!
//! Modules, bottom up:
//! - [`numerics`]: matrices, the three-layer perceptron with exact
//!   gradients, Adam, seeded randomness.
//! - [`model`]: decoders, latent table, objectives and their gradients.
//! - [`trainer`]: the joint optimization loop and checkpoints.
//! - [`data`]: dataset IO, normalization, synthetic data, noise injection.
//! - [`eval`]: k-means with ACC/NMI/RI/F-score, KNN classification.
//! - [`analysis`]: σ density estimates, noise and dimension sweeps.

pub mod analysis;
pub mod data;
pub mod error;
pub mod eval;
pub mod hexfloat;
pub mod model;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
