use rand::Rng;

use super::{silu, silu_derivative, Matrix, SplineGrid};
use crate::error::{Error, Result};

/// One KAN layer: every (input, output) edge carries
/// `φ(x) = w_base · SiLU(x) + Σ_m c_m · B_m(x)` and each output sums its
/// incoming edges.
///
/// Layouts are row-major: `spline_coeffs[(i * out_width + o) * (G + k) + m]`
/// and `base_weights[i * out_width + o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KanLayerParams {
    pub in_width: usize,
    pub out_width: usize,
    pub grid: SplineGrid,
    pub spline_coeffs: Vec<f64>,
    pub base_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanGrads {
    pub spline_coeffs: Vec<f64>,
    pub base_weights: Vec<f64>,
}

/// Everything `backward` needs from a forward call.
#[derive(Debug, Clone)]
pub struct KanCache {
    in_width: usize,
    out_width: usize,
    num_basis: usize,
    inputs: Matrix,
    /// `(b, i, m)` basis values at the clamped input.
    basis: Vec<f64>,
    /// `(b, i, m)` basis derivatives, zeroed where the clamp is active.
    basis_deriv: Vec<f64>,
}

impl KanLayerParams {
    pub fn zeros(in_width: usize, out_width: usize, grid: SplineGrid) -> Result<Self> {
        if in_width == 0 || out_width == 0 {
            return Err(Error::Config(format!(
                "KAN layer widths must be positive, got {in_width}x{out_width}"
            )));
        }
        let nb = grid.num_basis();
        Ok(KanLayerParams {
            in_width,
            out_width,
            grid,
            spline_coeffs: vec![0.0; in_width * out_width * nb],
            base_weights: vec![0.0; in_width * out_width],
        })
    }

    /// Spline coefficients ~ U(-0.1, 0.1) / sqrt(in_width), base weights
    /// ~ U(-sqrt(6 / in_width), sqrt(6 / in_width)).
    pub fn init<R: Rng + ?Sized>(in_width: usize, out_width: usize, grid: SplineGrid, rng: &mut R) -> Result<Self> {
        let mut layer = Self::zeros(in_width, out_width, grid)?;
        let coeff_scale = 0.1 / (in_width as f64).sqrt();
        let base_bound = (6.0 / in_width as f64).sqrt();
        for c in &mut layer.spline_coeffs {
            *c = rng.gen_range(-coeff_scale..=coeff_scale);
        }
        for w in &mut layer.base_weights {
            *w = rng.gen_range(-base_bound..=base_bound);
        }
        Ok(layer)
    }

    pub fn num_basis(&self) -> usize {
        self.grid.num_basis()
    }

    pub fn num_edges(&self) -> usize {
        self.in_width * self.out_width
    }

    /// Number of trainable scalars: `(G + k + 1)` per edge.
    pub fn num_parameters(&self) -> usize {
        self.num_edges() * (self.num_basis() + 1)
    }

    fn check_shapes(&self) -> Result<()> {
        let nb = self.num_basis();
        if self.spline_coeffs.len() != self.in_width * self.out_width * nb
            || self.base_weights.len() != self.in_width * self.out_width
        {
            return Err(Error::Contract(format!(
                "KAN layer {}x{} tensors have {} coefficients and {} base weights",
                self.in_width,
                self.out_width,
                self.spline_coeffs.len(),
                self.base_weights.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<(Matrix, KanCache)> {
        self.check_shapes()?;
        if inputs.cols() != self.in_width {
            return Err(Error::Contract(format!(
                "KAN layer expects {} input columns, got {}",
                self.in_width,
                inputs.cols()
            )));
        }
        let batch = inputs.rows();
        let (nin, nout, nb) = (self.in_width, self.out_width, self.num_basis());
        let mut basis = vec![0.0; batch * nin * nb];
        let mut basis_deriv = vec![0.0; batch * nin * nb];
        let mut out = Matrix::zeros(batch, nout);

        for b in 0..batch {
            let x_row = inputs.row(b);
            let y_row = out.row_mut(b);
            for (i, &x) in x_row.iter().enumerate() {
                let off = (b * nin + i) * nb;
                let (vals, ders) = (&mut basis[off..off + nb], &mut basis_deriv[off..off + nb]);
                self.grid.basis_and_derivative_into(x, vals, ders);
                if !self.grid.contains(x) {
                    ders.fill(0.0);
                }
                let base = silu(x);
                for (o, y) in y_row.iter_mut().enumerate() {
                    let edge = i * nout + o;
                    let coeffs = &self.spline_coeffs[edge * nb..(edge + 1) * nb];
                    let spline: f64 = coeffs.iter().zip(vals.iter()).map(|(c, v)| c * v).sum();
                    *y += self.base_weights[edge] * base + spline;
                }
            }
        }

        let cache = KanCache {
            in_width: nin,
            out_width: nout,
            num_basis: nb,
            inputs: inputs.clone(),
            basis,
            basis_deriv,
        };
        Ok((out, cache))
    }

    pub fn backward(&self, cache: &KanCache, upstream: &Matrix) -> Result<(Matrix, KanGrads)> {
        self.check_shapes()?;
        if cache.in_width != self.in_width || cache.out_width != self.out_width || cache.num_basis != self.num_basis() {
            return Err(Error::Contract(format!(
                "KAN cache for a {}x{} layer (basis {}) used with a {}x{} layer (basis {})",
                cache.in_width,
                cache.out_width,
                cache.num_basis,
                self.in_width,
                self.out_width,
                self.num_basis()
            )));
        }
        let batch = cache.inputs.rows();
        if upstream.shape() != (batch, self.out_width) {
            return Err(Error::Contract(format!(
                "KAN upstream gradient is {:?}, expected ({batch}, {})",
                upstream.shape(),
                self.out_width
            )));
        }
        let (nin, nout, nb) = (self.in_width, self.out_width, self.num_basis());
        let mut grads = KanGrads {
            spline_coeffs: vec![0.0; self.spline_coeffs.len()],
            base_weights: vec![0.0; self.base_weights.len()],
        };
        let mut input_grad = Matrix::zeros(batch, nin);

        for b in 0..batch {
            let g_row = upstream.row(b);
            for i in 0..nin {
                let x = cache.inputs.get(b, i);
                let off = (b * nin + i) * nb;
                let vals = &cache.basis[off..off + nb];
                let ders = &cache.basis_deriv[off..off + nb];
                let base = silu(x);
                let dbase = silu_derivative(x);
                let mut dx = 0.0;
                for (o, &g) in g_row.iter().enumerate() {
                    let edge = i * nout + o;
                    grads.base_weights[edge] += g * base;
                    let coeffs = &self.spline_coeffs[edge * nb..(edge + 1) * nb];
                    let cgrad = &mut grads.spline_coeffs[edge * nb..(edge + 1) * nb];
                    let mut dspline = 0.0;
                    for m in 0..nb {
                        cgrad[m] += g * vals[m];
                        dspline += coeffs[m] * ders[m];
                    }
                    dx += g * (self.base_weights[edge] * dbase + dspline);
                }
                input_grad.set(b, i, dx);
            }
        }
        Ok((input_grad, grads))
    }
}
