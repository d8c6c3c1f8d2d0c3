//! Central-difference gradient checker.
//!
//! The checker is the independent path every trainer is validated against:
//! it never sees the analytic backward code, only a loss closure over a flat
//! parameter vector.

use crate::error::{Error, Result};

/// Compares `analytic` against central differences of `loss_at` around
/// `theta` and returns the worst per-coordinate error.
///
/// The error for coordinate i is `|a - n| / max(1, |a|, |n|)`: relative for
/// large gradients, absolute near zero where finite differences are noise.
pub fn grad_check<F>(
    theta: &[f64],
    analytic: &[f64],
    epsilon: f64,
    mut loss_at: F,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Domain(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    if theta.len() != analytic.len() {
        return Err(Error::shape(
            "grad_check",
            format!("theta len {}", theta.len()),
            format!("analytic len {}", analytic.len()),
        ));
    }
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        probe[i] = theta[i] + epsilon;
        let up = loss_at(&probe)?;
        probe[i] = theta[i] - epsilon;
        let down = loss_at(&probe)?;
        probe[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at perturbed coordinate {i}"
            )));
        }
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = analytic[i].abs().max(numeric.abs()).max(1.0);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
