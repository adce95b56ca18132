/// Central-difference gradient `(f(θ + h e_i) - f(θ - h e_i)) / 2h` per coordinate.
///
/// `loss_fn` must be deterministic; freeze dropout masks or use evaluation mode.
pub fn finite_difference_gradient<F>(mut loss_fn: F, params: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = loss_fn(&probe);
            probe[i] = orig - step;
            let minus = loss_fn(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
///
/// The floor keeps coordinates whose true gradient is ~0 from reporting
/// round-off noise as a huge relative error.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
