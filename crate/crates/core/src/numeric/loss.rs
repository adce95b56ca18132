use super::Matrix;
use crate::error::{Error, Result};

/// Mean squared error over all elements and its gradient with respect to `pred`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::Contract(format!(
            "mse: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.as_slice().len();
    if n == 0 {
        return Err(Error::Contract("mse over an empty batch".into()));
    }
    let count = n as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&p, &t) in pred.as_slice().iter().zip(target.as_slice()) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d / count);
    }
    Ok((loss / count, Matrix::from_vec(pred.rows(), pred.cols(), grad)?))
}
