//! Hotelling T² / Q-residual outlier screening with empirical quantile limits.

use serde::Serialize;

use super::pca::{pca_decompose, ZERO_VARIANCE_FLOOR};
use super::PreprocessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierReport {
    pub keep: Vec<bool>,
    pub t2: Vec<f64>,
    pub q: Vec<f64>,
    pub t2_threshold: f64,
    pub q_threshold: f64,
    pub removed_by_t2: usize,
    pub removed_by_q: usize,
}

impl OutlierReport {
    pub fn removed(&self) -> usize {
        self.keep.iter().filter(|&&k| !k).count()
    }
}

/// Nearest-rank empirical quantile: the smallest value with at least
/// `ci·N` values at or below it.
pub fn empirical_quantile(values: &[f64], ci: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((ci * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Flags rows whose T² or Q lies strictly above its `ci` quantile.
pub fn outlier_mask(
    rows: &[Vec<f64>],
    n_pcs: usize,
    ci: f64,
) -> Result<OutlierReport, PreprocessError> {
    let n = rows.len();
    if n_pcs >= n {
        return Err(PreprocessError::Input(format!(
            "outlier screening with {n_pcs} PCs needs more than {n_pcs} spectra, got {n}"
        )));
    }
    if !(ci > 0.0 && ci < 1.0) {
        return Err(PreprocessError::Input(format!(
            "confidence level {ci} not in (0, 1)"
        )));
    }
    let c = rows[0].len();
    let (model, scores) = pca_decompose(rows, n_pcs.min(c))?;
    let floor = model.eigenvalues.first().copied().unwrap_or(0.0) * 1e-12;
    let scale = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let q_floor = ZERO_VARIANCE_FLOOR * scale;

    let t2: Vec<f64> = scores
        .iter()
        .map(|s| {
            s.iter()
                .zip(&model.eigenvalues)
                .filter(|(_, &l)| l > floor && l > 0.0)
                .map(|(x, l)| x * x / l)
                .sum()
        })
        .collect();
    let q: Vec<f64> = rows
        .iter()
        .zip(&scores)
        .map(|(r, s)| {
            let q: f64 = r
                .iter()
                .zip(model.reconstruct(s))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if q > q_floor {
                q
            } else {
                0.0
            }
        })
        .collect();

    let t2_threshold = empirical_quantile(&t2, ci);
    let q_threshold = empirical_quantile(&q, ci);
    let mut keep = vec![true; n];
    let (mut removed_by_t2, mut removed_by_q) = (0, 0);
    for i in 0..n {
        let over_t2 = t2[i] > t2_threshold;
        let over_q = q[i] > q_threshold;
        removed_by_t2 += over_t2 as usize;
        removed_by_q += over_q as usize;
        keep[i] = !(over_t2 || over_q);
    }
    Ok(OutlierReport {
        keep,
        t2,
        q,
        t2_threshold,
        q_threshold,
        removed_by_t2,
        removed_by_q,
    })
}
