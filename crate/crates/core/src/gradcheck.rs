//! Central finite differences, used to audit the tape's analytic gradients.
//!
//! Nothing here touches the backward pass: it only re-evaluates a scalar
//! function at perturbed inputs.

use crate::error::Result;

/// Default perturbation for central differences in `f64`.
pub const STEP: f64 = 1e-5;

/// Gradients smaller than this in magnitude are compared absolutely.
///
/// Central differences at `STEP` carry roughly 1e-10 of truncation and
/// rounding noise, so relative error on near-zero gradients measures noise.
pub const SCALE_FLOOR: f64 = 1e-6;

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for each coordinate in `coords`.
pub fn central_difference<F>(mut f: F, x: &[f64], coords: &[usize], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = f(&probe)?;
            probe[i] = orig - step;
            let minus = f(&probe)?;
            probe[i] = orig;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|, SCALE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(SCALE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Largest relative error over paired gradient entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Evenly spread coordinate sample of at most `count` indices out of `len`.
pub fn sample_coords(len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    let mut coords: Vec<usize> = (0..count).map(|i| i * len / count).collect();
    coords.dedup();
    coords
}
