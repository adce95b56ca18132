//! Hand-written f64 numerics for training small KAN and MLP regressors.
//!
//! Every layer exposes a `forward` that returns its outputs together with a
//! cache, and a `backward` that consumes that cache and an upstream gradient.
//! Gradients are derived analytically per layer type; [`finite_difference_gradient`]
//! exists to check them.

mod activation;
mod bspline;
mod grad;
mod gradcheck;
mod kan;
mod linear;
mod loss;
mod matrix;
mod optim;

pub use activation::{dropout, relu, relu_backward, silu, silu_derivative, DropoutOutput, Mode};
pub use bspline::SplineGrid;
pub use grad::{clip_gradient_norm, global_norm, GradientBundle};
pub use gradcheck::{finite_difference_gradient, max_relative_error};
pub use kan::{KanCache, KanGrads, KanLayerParams};
pub use linear::{LinearCache, LinearGrads, LinearLayerParams};
pub use loss::mse_loss;
pub use matrix::Matrix;
pub use optim::{adam_step, AdamConfig, AdamState};
