//! Dense linear algebra, the fixed three-layer perceptron with exact
//! reverse-mode gradients, Adam, and the seeded Gaussian source.
//!
//! All arithmetic is `f64`.

mod adam;
mod matrix;
mod mlp;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use matrix::{matmul, relu, relu_grad, Matrix};
pub use mlp::{mlp_backward, mlp_forward, Dense, MlpCache, MlpParams};
pub use rng::{gaussian_draw, Rng};
