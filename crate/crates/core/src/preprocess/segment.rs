//! Two-stage k-means tissue segmentation.

use serde::Serialize;

use super::kmeans::{kmeans_cluster, KMeansParams};
use super::{PipelineConfig, PreprocessError};
use crate::spectra::{truncation_range, HyperMosaic};

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Final tissue mask.
    pub mask: Vec<bool>,
    /// Stage-1 tissue cluster.
    pub stage1_tissue: Vec<bool>,
    /// Stage-2 paraffin cluster.
    pub paraffin: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SegmentationCounts {
    pub tissue: usize,
    pub paraffin: usize,
    pub slide: usize,
}

impl Segmentation {
    pub fn counts(&self) -> SegmentationCounts {
        let tissue = self.mask.iter().filter(|&&m| m).count();
        let paraffin = self.paraffin.iter().filter(|&&m| m).count();
        SegmentationCounts {
            tissue,
            paraffin,
            slide: self.mask.len() - tissue - paraffin,
        }
    }
}

fn window_rows(mosaic: &HyperMosaic, window: (f64, f64)) -> Result<Vec<Vec<f64>>, PreprocessError> {
    let range = truncation_range(mosaic.axis(), window.0, window.1)?;
    Ok((0..mosaic.n_pixels())
        .map(|p| {
            mosaic.pixel(p)[range.clone()]
                .iter()
                .map(|&v| v as f64)
                .collect()
        })
        .collect())
}

fn all_identical(rows: &[Vec<f64>]) -> bool {
    rows.iter().all(|r| r == &rows[0])
}

/// Splits `rows` in two and returns, per row, whether it falls in the
/// cluster with the larger mean integrated absorbance.
fn split_by_integral(
    rows: &[Vec<f64>],
    config: &PipelineConfig,
    stage: &str,
) -> Result<Vec<bool>, PreprocessError> {
    let params = KMeansParams {
        k: 2,
        seed: config.kmeans_seed,
        max_iter: config.kmeans_max_iter,
        restarts: config.kmeans_restarts,
    };
    let res = kmeans_cluster(rows, params)?;
    let mut integral = [0.0f64; 2];
    let mut count = [0usize; 2];
    for (row, &l) in rows.iter().zip(&res.labels) {
        integral[l] += row.iter().sum::<f64>();
        count[l] += 1;
    }
    if count.contains(&0) {
        return Err(PreprocessError::Segmentation(format!(
            "{stage}: k-means produced an empty cluster"
        )));
    }
    let high = if integral[1] / count[1] as f64 > integral[0] / count[0] as f64 {
        1
    } else {
        0
    };
    Ok(res.labels.iter().map(|&l| l == high).collect())
}

pub fn segment_tissue(
    mosaic: &HyperMosaic,
    config: &PipelineConfig,
) -> Result<Segmentation, PreprocessError> {
    let amide = window_rows(mosaic, config.amide_window)?;
    if all_identical(&amide) {
        return Err(PreprocessError::Segmentation(
            "all amide-window spectra are identical; cannot form two clusters".into(),
        ));
    }
    let stage1_tissue = split_by_integral(&amide, config, "amide clustering")?;

    let mut wax = window_rows(mosaic, config.paraffin_window)?;
    for (row, &t) in wax.iter_mut().zip(&stage1_tissue) {
        if t {
            row.fill(0.0);
        }
    }
    let paraffin = if all_identical(&wax) {
        vec![false; wax.len()]
    } else {
        split_by_integral(&wax, config, "paraffin clustering")?
    };
    let mask = stage1_tissue
        .iter()
        .zip(&paraffin)
        .map(|(&t, &p)| t && !p)
        .collect();
    Ok(Segmentation {
        mask,
        stage1_tissue,
        paraffin,
    })
}
