use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Training mode enables dropout; evaluation mode is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

pub fn relu(inputs: &Matrix) -> Matrix {
    inputs.map(|v| v.max(0.0))
}

/// Gradient of ReLU given its pre-activation input. The subgradient at 0 is 0.
pub fn relu_backward(pre_activation: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    if pre_activation.shape() != upstream.shape() {
        return Err(Error::Contract(format!(
            "relu backward: input {:?} vs upstream {:?}",
            pre_activation.shape(),
            upstream.shape()
        )));
    }
    let data = pre_activation
        .as_slice()
        .iter()
        .zip(upstream.as_slice())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Matrix::from_vec(upstream.rows(), upstream.cols(), data)
}

/// x * sigmoid(x), the residual base activation on KAN edges.
pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_derivative(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutOutput {
    pub outputs: Matrix,
    /// Per-element multiplier: `0` or `1 / (1 - p)` in training, all ones in evaluation.
    pub mask: Matrix,
}

/// Inverted dropout. In training each element is zeroed with probability
/// `p` and survivors are scaled by `1 / (1 - p)`; evaluation is the identity.
pub fn dropout<R: Rng + ?Sized>(inputs: &Matrix, p: f64, mode: Mode, rng: &mut R) -> Result<DropoutOutput> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!(
            "dropout probability must lie in [0, 1), got {p}"
        )));
    }
    let (rows, cols) = inputs.shape();
    let mask = match mode {
        Mode::Eval => Matrix::filled(rows, cols, 1.0),
        Mode::Train => {
            let scale = 1.0 / (1.0 - p);
            let data = (0..rows * cols)
                .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
                .collect();
            Matrix::from_vec(rows, cols, data)?
        }
    };
    let outputs = inputs.hadamard(&mask)?;
    Ok(DropoutOutput { outputs, mask })
}
