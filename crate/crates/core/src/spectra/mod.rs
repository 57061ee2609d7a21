//! Spectra, mosaics, cube files and the synthetic dataset generator.

mod axis;
pub mod io;
mod mosaic;
pub mod synth;

pub use axis::WavenumberAxis;
pub use io::{read_cube, write_cube};
pub use mosaic::{HyperMosaic, Patch, ReferenceLibrary, Spectrum};
pub use synth::{synth_dataset, SynthConfig, SynthDataset};

#[derive(Debug, thiserror::Error)]
pub enum SpectraError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("config error: {0}")]
    Config(String),
}

/// Keeps the channels whose wavenumber lies in `[lo, hi]`, preserving the
/// descending order.
pub fn truncate_axis(mosaic: &HyperMosaic, hi: f64, lo: f64) -> Result<HyperMosaic, SpectraError> {
    let range = truncation_range(mosaic.axis(), hi, lo)?;
    mosaic.select_channels(range)
}

pub(crate) fn truncation_range(
    axis: &WavenumberAxis,
    hi: f64,
    lo: f64,
) -> Result<std::ops::Range<usize>, SpectraError> {
    if hi <= lo {
        return Err(SpectraError::Range(format!(
            "window ({hi}, {lo}) must have hi > lo"
        )));
    }
    let range = axis.index_range(hi, lo).ok_or_else(|| {
        SpectraError::Range(format!(
            "window {hi}..{lo} does not intersect axis {}..{}",
            axis.start(),
            axis.end()
        ))
    })?;
    if range.len() < 2 {
        return Err(SpectraError::Range(format!(
            "window {hi}..{lo} keeps only {} point(s)",
            range.len()
        )));
    }
    Ok(range)
}
