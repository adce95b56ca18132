use crate::error::{Error, Result};

/// Gradient tensors in the same canonical order as the parameter segments
/// they differentiate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientBundle {
    pub tensors: Vec<Vec<f64>>,
}

impl GradientBundle {
    pub fn new(tensors: Vec<Vec<f64>>) -> Self {
        GradientBundle { tensors }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }
}

/// L2 norm over all concatenated tensors.
pub fn global_norm(grads: &GradientBundle) -> f64 {
    grads.tensors.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescales the whole bundle by `max_norm / norm` when its global norm exceeds `max_norm`.
pub fn clip_gradient_norm(mut grads: GradientBundle, max_norm: f64) -> Result<GradientBundle> {
    if !(max_norm > 0.0 && max_norm.is_finite()) {
        return Err(Error::Config(format!(
            "max_norm must be positive and finite, got {max_norm}"
        )));
    }
    let norm = global_norm(&grads);
    if !norm.is_finite() {
        return Err(Error::Numeric(format!("gradient norm is {norm}")));
    }
    if norm > max_norm {
        let scale = max_norm / norm;
        for v in grads.tensors.iter_mut().flatten() {
            *v *= scale;
        }
    }
    Ok(grads)
}
