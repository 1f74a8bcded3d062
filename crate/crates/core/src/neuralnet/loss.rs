//! Losses returning the mean over their inputs and the gradient of that mean.

use crate::{Error, Result};

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

fn check_lengths(pred: usize, target: usize) -> Result<()> {
    if pred != target {
        return Err(Error::Shape(format!(
            "prediction length {pred} does not match target length {target}"
        )));
    }
    Ok(())
}

/// Huber value of a single error.
pub fn huber(error: f64, delta: f64) -> f64 {
    let a = error.abs();
    if a <= delta {
        0.5 * error * error
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber`] with respect to the error.
pub fn huber_derivative(error: f64, delta: f64) -> f64 {
    error.clamp(-delta, delta)
}

/// Mean Huber loss of `pred - target` and its gradient with respect to `pred`.
pub fn huber_loss(pred: &[f64], target: &[f64], delta: f64) -> Result<(f64, Vec<f64>)> {
    check_lengths(pred.len(), target.len())?;
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("huber delta must be positive, got {delta}")));
    }
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p - t;
            total += huber(e, delta);
            huber_derivative(e, delta) / n
        })
        .collect();
    Ok((total / n, grad))
}

/// Mean binary cross-entropy on raw logits, and its gradient w.r.t. the logits.
///
/// Uses `softplus(z) - y·z`, which stays finite for any logit.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(logits.len(), labels.len())?;
    if logits.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            total += softplus(z) - y * z;
            (sigmoid(z) - y) / n
        })
        .collect();
    Ok((total / n, grad))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}
