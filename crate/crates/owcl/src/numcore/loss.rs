//! Softmax, log-sum-exp and the two losses used by the trainers.
//!
//! Everything subtracts the max before exponentiating so large logits stay
//! finite.

use crate::error::{Error, Result};

/// Numerically stable log(sum(exp(z))).
pub fn log_sum_exp(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::Domain("log_sum_exp of empty vector".into()));
    }
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&v| (v - m).exp()).sum();
    Ok(m + sum.ln())
}

/// Softmax with max-subtraction. Output sums to 1 and preserves ordering.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::Domain("softmax of empty vector".into()));
    }
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Cross-entropy of a logit vector against an integer label.
///
/// Returns the loss and its gradient w.r.t. the logits,
/// `softmax(logits) - onehot(label)`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Index {
            index: label,
            len: logits.len(),
        });
    }
    let lse = log_sum_exp(logits)?;
    let loss = lse - logits[label];
    let mut grad = softmax(logits)?;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Sum of squared differences and its gradient 2*(pred - target).
pub fn squared_error(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(
            "squared_error",
            format!("pred len {}", pred.len()),
            format!("target len {}", target.len()),
        ));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d);
    }
    Ok((loss, grad))
}
