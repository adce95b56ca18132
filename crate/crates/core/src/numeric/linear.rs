use rand::Rng;

use super::Matrix;
use crate::error::{Error, Result};

/// Affine map `y = W x + b` with `weights` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayerParams {
    pub in_width: usize,
    pub out_width: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearCache {
    in_width: usize,
    out_width: usize,
    inputs: Matrix,
}

impl LinearLayerParams {
    pub fn zeros(in_width: usize, out_width: usize) -> Result<Self> {
        if in_width == 0 || out_width == 0 {
            return Err(Error::Config(format!(
                "linear layer widths must be positive, got {in_width}x{out_width}"
            )));
        }
        Ok(LinearLayerParams {
            in_width,
            out_width,
            weights: vec![0.0; in_width * out_width],
            biases: vec![0.0; out_width],
        })
    }

    /// Weights ~ U(-sqrt(6 / in), sqrt(6 / in)), biases zero.
    pub fn init<R: Rng + ?Sized>(in_width: usize, out_width: usize, rng: &mut R) -> Result<Self> {
        let mut layer = Self::zeros(in_width, out_width)?;
        let bound = (6.0 / in_width as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.gen_range(-bound..=bound);
        }
        Ok(layer)
    }

    pub fn num_parameters(&self) -> usize {
        (self.in_width + 1) * self.out_width
    }

    fn check_shapes(&self) -> Result<()> {
        if self.weights.len() != self.in_width * self.out_width || self.biases.len() != self.out_width {
            return Err(Error::Contract(format!(
                "linear layer {}x{} has {} weights and {} biases",
                self.in_width,
                self.out_width,
                self.weights.len(),
                self.biases.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<(Matrix, LinearCache)> {
        self.check_shapes()?;
        if inputs.cols() != self.in_width {
            return Err(Error::Contract(format!(
                "linear layer expects {} input columns, got {}",
                self.in_width,
                inputs.cols()
            )));
        }
        let mut out = Matrix::zeros(inputs.rows(), self.out_width);
        for b in 0..inputs.rows() {
            let x = inputs.row(b);
            for (o, y) in out.row_mut(b).iter_mut().enumerate() {
                let w = &self.weights[o * self.in_width..(o + 1) * self.in_width];
                *y = self.biases[o] + w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            }
        }
        let cache = LinearCache {
            in_width: self.in_width,
            out_width: self.out_width,
            inputs: inputs.clone(),
        };
        Ok((out, cache))
    }

    pub fn backward(&self, cache: &LinearCache, upstream: &Matrix) -> Result<(Matrix, LinearGrads)> {
        self.check_shapes()?;
        if cache.in_width != self.in_width || cache.out_width != self.out_width {
            return Err(Error::Contract(format!(
                "linear cache for a {}x{} layer used with a {}x{} layer",
                cache.in_width, cache.out_width, self.in_width, self.out_width
            )));
        }
        let batch = cache.inputs.rows();
        if upstream.shape() != (batch, self.out_width) {
            return Err(Error::Contract(format!(
                "linear upstream gradient is {:?}, expected ({batch}, {})",
                upstream.shape(),
                self.out_width
            )));
        }
        let nin = self.in_width;
        let mut grads = LinearGrads {
            weights: vec![0.0; self.weights.len()],
            biases: vec![0.0; self.out_width],
        };
        let mut input_grad = Matrix::zeros(batch, nin);
        for b in 0..batch {
            let x = cache.inputs.row(b);
            let g = upstream.row(b);
            for (o, &go) in g.iter().enumerate() {
                grads.biases[o] += go;
                let w = &self.weights[o * nin..(o + 1) * nin];
                let gw = &mut grads.weights[o * nin..(o + 1) * nin];
                for i in 0..nin {
                    gw[i] += go * x[i];
                }
                for (dx, &wi) in input_grad.row_mut(b).iter_mut().zip(w) {
                    *dx += go * wi;
                }
            }
        }
        Ok((input_grad, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_difference_gradient, max_relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_pass_inputs_through() {
        let mut layer = LinearLayerParams::zeros(3, 3).unwrap();
        for i in 0..3 {
            layer.weights[i * 3 + i] = 1.0;
        }
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [3.0, 0.0, 4.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().0, x);
    }

    #[test]
    fn bias_gradient_is_column_sum_of_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = LinearLayerParams::init(3, 2, &mut rng).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [0.0, -1.0, 1.0], [2.0, 2.0, 2.0]]).unwrap();
        let up = Matrix::from_rows(&[[1.0, -1.0], [0.5, 2.0], [0.25, 0.0]]).unwrap();
        let (_, cache) = layer.forward(&x).unwrap();
        let (_, g) = layer.backward(&cache, &up).unwrap();
        assert_eq!(g.biases, vec![1.75, 1.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layer = LinearLayerParams::init(4, 3, &mut rng).unwrap();
            let x = Matrix::from_vec(5, 4, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let w = Matrix::from_vec(5, 3, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let probe = |out: &Matrix| -> f64 { out.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum() };
            let (_, cache) = layer.forward(&x).unwrap();
            let (dx, g) = layer.backward(&cache, &w).unwrap();

            let fd_x = finite_difference_gradient(
                |p| probe(&layer.forward(&Matrix::from_vec(5, 4, p.to_vec()).unwrap()).unwrap().0),
                x.as_slice(),
                1e-5,
            );
            assert!(max_relative_error(dx.as_slice(), &fd_x, 1e-6) < 1e-4);
            let fd_w = finite_difference_gradient(
                |p| {
                    let mut l = layer.clone();
                    l.weights = p.to_vec();
                    probe(&l.forward(&x).unwrap().0)
                },
                &layer.weights,
                1e-5,
            );
            assert!(max_relative_error(&g.weights, &fd_w, 1e-6) < 1e-4);
        }
    }

    #[test]
    fn shape_mismatch() {
        let layer = LinearLayerParams::zeros(3, 2).unwrap();
        assert!(matches!(layer.forward(&Matrix::zeros(1, 4)), Err(Error::Contract(_))));
    }
}
