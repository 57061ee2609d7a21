//! Head losses evaluated on logits, with their exact logit gradients.

use super::layers::{sigmoid, softmax};
use super::NnError;
use crate::labels::EncodingKind;

pub const PROB_CLAMP: f64 = 1e-7;

fn clamp(p: f64) -> (f64, bool) {
    let c = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    (c, c == p)
}

/// Loss and `∂loss/∂logits`. `weight` is the class weight of the target; it
/// is ignored for regression.
pub fn loss_and_grad(
    kind: EncodingKind,
    logits: &[f64],
    target: &[f64],
    weight: f64,
) -> Result<(f64, Vec<f64>), NnError> {
    if logits.len() != target.len() {
        return Err(NnError::Loss(format!(
            "{} logits for a {}-dim target",
            logits.len(),
            target.len()
        )));
    }
    if logits.iter().chain(target).any(|v| !v.is_finite()) || !weight.is_finite() {
        return Err(NnError::Loss(format!(
            "non-finite loss input: logits {logits:?}, target {target:?}"
        )));
    }
    let (loss, grad) = match kind {
        EncodingKind::Binary => {
            let (z, y) = (logits[0], target[0]);
            let (p, live) = clamp(sigmoid(z));
            let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            let g = if live { p - y } else { 0.0 };
            (weight * loss, vec![weight * g])
        }
        EncodingKind::OneHot => {
            let probs = softmax(logits);
            let mut loss = 0.0;
            // dL/dp for the clamped log terms, then the softmax Jacobian.
            let mut dp = vec![0.0; probs.len()];
            for (i, (&p, &y)) in probs.iter().zip(target).enumerate() {
                let (c, live) = clamp(p);
                loss -= y * c.ln();
                if live {
                    dp[i] = -y / c;
                }
            }
            let dot: f64 = dp.iter().zip(&probs).map(|(a, b)| a * b).sum();
            let grad = probs
                .iter()
                .zip(&dp)
                .map(|(p, d)| weight * p * (d - dot))
                .collect();
            (weight * loss, grad)
        }
        EncodingKind::Ordinal => {
            let mut loss = 0.0;
            let mut grad = Vec::with_capacity(logits.len());
            for (&z, &y) in logits.iter().zip(target) {
                let s = sigmoid(z);
                loss += (s - y) * (s - y);
                grad.push(weight * 2.0 * (s - y) * s * (1.0 - s));
            }
            (weight * loss, grad)
        }
        EncodingKind::Regression => {
            let n = logits.len() as f64;
            let loss = logits
                .iter()
                .zip(target)
                .map(|(z, y)| (z - y) * (z - y))
                .sum::<f64>()
                / n;
            (
                loss,
                logits
                    .iter()
                    .zip(target)
                    .map(|(z, y)| 2.0 * (z - y) / n)
                    .collect(),
            )
        }
    };
    if !loss.is_finite() {
        return Err(NnError::Loss(format!("loss is {loss}")));
    }
    Ok((loss, grad))
}

pub fn compute_loss(
    kind: EncodingKind,
    logits: &[f64],
    target: &[f64],
    weight: f64,
) -> Result<f64, NnError> {
    loss_and_grad(kind, logits, target, weight).map(|(l, _)| l)
}
