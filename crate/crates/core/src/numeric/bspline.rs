use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knot grid for degree-`order` B-splines over `intervals` uniform cells.
///
/// The extended knot vector has `intervals + 2 * order + 1` entries: the
/// `intervals + 1` knots spanning `[range_min, range_max]` plus `order`
/// padding knots on each side with the same spacing. This yields
/// `intervals + order` basis functions that form a partition of unity on
/// the range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    range_min: f64,
    range_max: f64,
    intervals: usize,
    order: usize,
    knots: Vec<f64>,
}

impl SplineGrid {
    pub fn uniform(range_min: f64, range_max: f64, intervals: usize, order: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::Config("spline grid needs at least one interval".into()));
        }
        if !(range_min.is_finite() && range_max.is_finite() && range_min < range_max) {
            return Err(Error::Config(format!(
                "spline grid range [{range_min}, {range_max}] is not a finite, non-empty interval"
            )));
        }
        let h = (range_max - range_min) / intervals as f64;
        let knots = (0..intervals + 2 * order + 1)
            .map(|i| range_min + (i as f64 - order as f64) * h)
            .collect();
        Self::from_knots(range_min, range_max, intervals, order, knots)
    }

    /// Builds a grid from an explicit extended knot vector, validating it.
    pub fn from_knots(range_min: f64, range_max: f64, intervals: usize, order: usize, knots: Vec<f64>) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::Config("spline grid needs at least one interval".into()));
        }
        let expected = intervals + 2 * order + 1;
        if knots.len() != expected {
            return Err(Error::Config(format!(
                "extended knot vector needs {expected} knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Config("knot vector contains non-finite values".into()));
        }
        if let Some(i) = knots.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "knots must be strictly increasing (knot {} = {} >= knot {} = {})",
                i,
                knots[i],
                i + 1,
                knots[i + 1]
            )));
        }
        let tol = 1e-12 * (range_max - range_min).abs().max(1.0);
        if (knots[order] - range_min).abs() > tol || (knots[order + intervals] - range_max).abs() > tol {
            return Err(Error::Config(format!(
                "knots {order} and {} must coincide with the range [{range_min}, {range_max}]",
                order + intervals
            )));
        }
        Ok(SplineGrid {
            range_min,
            range_max,
            intervals,
            order,
            knots,
        })
    }

    pub fn range_min(&self) -> f64 {
        self.range_min
    }

    pub fn range_max(&self) -> f64 {
        self.range_max
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `G + k` basis functions.
    pub fn num_basis(&self) -> usize {
        self.intervals + self.order
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.range_min, self.range_max)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.range_min && x <= self.range_max
    }

    /// Index `s` of the knot span `[t_s, t_{s+1})` holding the clamped `x`.
    /// The right end of the range is folded into the last span.
    fn span(&self, x: f64) -> usize {
        let lo = self.order;
        let hi = self.order + self.intervals - 1;
        if x >= self.knots[hi + 1] {
            return hi;
        }
        // last knot in [lo, hi] that is <= x
        let upper = self.knots[lo + 1..=hi].partition_point(|&t| t <= x);
        lo + upper
    }

    /// Basis values at `x` (clamped into the grid range).
    pub fn basis(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.num_basis()];
        self.basis_into(x, &mut out);
        out
    }

    /// Writes all `G + k` basis values at `x` into `out`.
    pub fn basis_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.num_basis());
        let x = self.clamp(x);
        let s = self.span(x);
        let k = self.order;
        let mut local = vec![0.0; k + 1];
        self.nonzero_basis(x, s, k, &mut local);
        out.fill(0.0);
        out[s - k..=s].copy_from_slice(&local);
    }

    /// Writes basis values and their derivatives with respect to the clamped
    /// argument. Outside the range the clamp makes the true derivative zero;
    /// callers handle that, this returns the one-sided boundary value.
    pub fn basis_and_derivative_into(&self, x: f64, values: &mut [f64], derivatives: &mut [f64]) {
        debug_assert_eq!(values.len(), self.num_basis());
        debug_assert_eq!(derivatives.len(), self.num_basis());
        let x = self.clamp(x);
        let s = self.span(x);
        let k = self.order;
        values.fill(0.0);
        derivatives.fill(0.0);

        let mut local = vec![0.0; k + 1];
        self.nonzero_basis(x, s, k, &mut local);
        values[s - k..=s].copy_from_slice(&local);
        if k == 0 {
            return;
        }

        // Degree k-1 functions B_{s-k+1..=s}; B_{s-k} and B_{s+1} vanish on this span.
        let mut lower = vec![0.0; k];
        self.nonzero_basis(x, s, k - 1, &mut lower);
        let t = &self.knots;
        let kf = k as f64;
        let lower_at = |j: usize| -> f64 {
            if j + k < s + 1 || j > s {
                0.0
            } else {
                lower[j + k - 1 - s]
            }
        };
        for j in s - k..=s {
            let left = lower_at(j) / (t[j + k] - t[j]);
            let right = lower_at(j + 1) / (t[j + k + 1] - t[j + 1]);
            derivatives[j] = kf * (left - right);
        }
    }

    /// Cox-de Boor triangular evaluation of the `degree + 1` basis functions
    /// of the given degree that are nonzero on span `s`
    /// (indices `s - degree ..= s`).
    fn nonzero_basis(&self, x: f64, s: usize, degree: usize, out: &mut [f64]) {
        let t = &self.knots;
        let mut left = vec![0.0; degree + 1];
        let mut right = vec![0.0; degree + 1];
        out[0] = 1.0;
        for j in 1..=degree {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }
}
