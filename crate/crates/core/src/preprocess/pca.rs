//! Mean-centred PCA by symmetric eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};

use super::PreprocessError;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// A × C, orthonormal rows.
    pub loadings: Vec<Vec<f64>>,
    /// Score variances, non-increasing.
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Sum of all eigenvalues (trace of the covariance).
    pub total_variance: f64,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.loadings.len()
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        self.loadings
            .iter()
            .map(|l| {
                l.iter()
                    .zip(row)
                    .zip(&self.mean)
                    .map(|((a, x), m)| a * (x - m))
                    .sum()
            })
            .collect()
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (s, l) in scores.iter().zip(&self.loadings) {
            for (o, a) in out.iter_mut().zip(l) {
                *o += s * a;
            }
        }
        out
    }
}

/// Relative size (against the mean squared row norm) below which a variance
/// is treated as zero.
pub const ZERO_VARIANCE_FLOOR: f64 = 1e-18;

fn centered(rows: &[Vec<f64>]) -> (DMatrix<f64>, Vec<f64>) {
    let n = rows.len();
    let c = rows[0].len();
    let mut mean = vec![0.0; c];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, c, |i, j| rows[i][j] - mean[j]);
    (x, mean)
}

/// Decomposes `rows` (N × C) into `n_components` principal components and
/// returns the model together with the N × A score matrix.
pub fn pca_decompose(
    rows: &[Vec<f64>],
    n_components: usize,
) -> Result<(PcaModel, Vec<Vec<f64>>), PreprocessError> {
    let n = rows.len();
    if n < 2 {
        return Err(PreprocessError::Input(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return Err(PreprocessError::Input(
            "PCA rows must have equal length".into(),
        ));
    }
    if n_components > (n - 1).min(c) {
        return Err(PreprocessError::Input(format!(
            "{n_components} components requested but at most min(N-1, C) = {} available",
            (n - 1).min(c)
        )));
    }
    let (x, mean) = centered(rows);
    let denom = (n - 1) as f64;

    // Work in whichever of the C×C covariance or N×N Gram matrix is smaller.
    let (eigvals, vectors): (Vec<f64>, Vec<Vec<f64>>) = if c <= n {
        let cov = x.tr_mul(&x) / denom;
        let eig = SymmetricEigen::new(cov);
        let vecs = (0..c)
            .map(|j| eig.eigenvectors.column(j).iter().copied().collect())
            .collect();
        (eig.eigenvalues.iter().copied().collect(), vecs)
    } else {
        let gram = &x * x.transpose() / denom;
        let eig = SymmetricEigen::new(gram);
        let vecs = (0..n)
            .map(|j| {
                let u = eig.eigenvectors.column(j);
                let v = x.tr_mul(&u);
                let norm = v.norm();
                if norm > 0.0 {
                    (v / norm).iter().copied().collect()
                } else {
                    vec![0.0; c]
                }
            })
            .collect();
        (eig.eigenvalues.iter().copied().collect(), vecs)
    };

    let mut order: Vec<usize> = (0..eigvals.len()).collect();
    order.sort_by(|&a, &b| eigvals[b].total_cmp(&eigvals[a]).then(a.cmp(&b)));
    // Eigenvalues at rounding level relative to the data scale are exact zeros.
    let scale = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let floor = ZERO_VARIANCE_FLOOR * scale;
    let eigvals: Vec<f64> = eigvals
        .iter()
        .map(|&v| if v > floor { v } else { 0.0 })
        .collect();
    let total_variance: f64 = eigvals.iter().sum();

    let mut loadings = Vec::with_capacity(n_components);
    let mut eigenvalues = Vec::with_capacity(n_components);
    for &j in order.iter().take(n_components) {
        let mut v = vectors[j].clone();
        // Sign convention: largest-magnitude entry positive.
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        loadings.push(v);
        eigenvalues.push(eigvals[j].max(0.0));
    }
    let explained_variance_ratio = eigenvalues
        .iter()
        .map(|&l| {
            if total_variance > 0.0 {
                l / total_variance
            } else {
                0.0
            }
        })
        .collect();
    let model = PcaModel {
        loadings,
        eigenvalues,
        mean,
        explained_variance_ratio,
        total_variance,
    };
    let scores = rows.iter().map(|r| model.scores(r)).collect();
    Ok((model, scores))
}
