//! Automated preprocessing: segmentation, outlier screening, smoothing,
//! EMSC correction, normalisation and patch extraction.

mod config;
pub mod emsc;
pub mod kmeans;
pub mod outlier;
pub mod patches;
pub mod pca;
pub mod pipeline;
pub mod savgol;
pub mod segment;

pub use config::PipelineConfig;
pub use emsc::{build_emsc_model, emsc_correct, EmscCoefficients, EmscModel};
pub use kmeans::{kmeans_cluster, KMeansParams, KMeansResult};
pub use outlier::{outlier_mask, OutlierReport};
pub use patches::{extract_patches, PatchCounts, PatchSet};
pub use pca::{pca_decompose, PcaModel};
pub use pipeline::{run_pipeline, PipelineReport};
pub use savgol::{savgol_smooth, SavGol};
pub use segment::{segment_tissue, Segmentation};

use crate::spectra::{SpectraError, Spectrum};

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("segmentation error: {0}")]
    Segmentation(String),
    #[error("EMSC model error: {0}")]
    Model(String),
    #[error("EMSC correction error: {0}")]
    Correction(String),
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

pub(crate) fn minmax_values(values: &[f64]) -> Result<Vec<f64>, PreprocessError> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.partial_cmp(&min) != Some(std::cmp::Ordering::Greater) {
        return Err(PreprocessError::Normalization(format!(
            "spectrum is constant ({min}); flagged for removal"
        )));
    }
    let span = max - min;
    Ok(values.iter().map(|v| (v - min) / span).collect())
}

/// Rescales a spectrum onto [0, 1].
pub fn minmax_normalize(spectrum: &Spectrum) -> Result<Spectrum, PreprocessError> {
    Ok(Spectrum {
        axis: spectrum.axis,
        values: minmax_values(&spectrum.values)?,
    })
}
