//! The full per-mosaic preprocessing chain.

use rayon::prelude::*;
use serde::Serialize;

use super::emsc::build_emsc_model;
use super::outlier::outlier_mask;
use super::patches::PatchCounts;
use super::savgol::SavGol;
use super::segment::{segment_tissue, SegmentationCounts};
use super::{minmax_values, PipelineConfig, PreprocessError};
use crate::spectra::{truncate_axis, HyperMosaic, ReferenceLibrary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierPass {
    pub screened: usize,
    pub removed_t2: usize,
    pub removed_q: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub sample_id: String,
    pub pixels: usize,
    pub segmentation: SegmentationCounts,
    pub first_outlier_pass: OutlierPass,
    pub emsc_failures: usize,
    pub normalization_failures: usize,
    pub second_outlier_pass: OutlierPass,
    pub live_pixels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patches: Option<PatchCounts>,
}

fn screen(
    mosaic: &HyperMosaic,
    mask: &mut [bool],
    config: &PipelineConfig,
) -> Result<OutlierPass, PreprocessError> {
    let live: Vec<usize> = (0..mask.len()).filter(|&p| mask[p]).collect();
    let rows: Vec<Vec<f64>> = live.iter().map(|&p| mosaic.pixel_f64(p)).collect();
    let rep = outlier_mask(&rows, config.outlier_pcs, config.outlier_ci)?;
    for (&p, &k) in live.iter().zip(&rep.keep) {
        mask[p] = k;
    }
    Ok(OutlierPass {
        screened: live.len(),
        removed_t2: rep.removed_by_t2,
        removed_q: rep.removed_by_q,
        removed: rep.removed(),
    })
}

enum PixelOutcome {
    Ok(Vec<f64>),
    EmscFailed,
    NormFailed,
}

/// Segments, truncates, screens, smooths, EMSC-corrects and normalises one
/// mosaic. Pixels removed at any stage are zeroed in the output.
pub fn run_pipeline(
    mosaic: &HyperMosaic,
    library: &ReferenceLibrary,
    config: &PipelineConfig,
) -> Result<(HyperMosaic, PipelineReport), PreprocessError> {
    config.validate()?;
    let seg = segment_tissue(mosaic, config)?;
    let (hi, lo) = config.biofingerprint;
    let mut out = truncate_axis(mosaic, hi, lo)?;
    let mut mask = seg.mask.clone();

    let first_outlier_pass = screen(&out, &mut mask, config)?;

    let smoother = SavGol::new(config.savgol_window, config.savgol_order)?;
    let model = build_emsc_model(
        library,
        out.axis(),
        config.emsc_poly_order,
        config.emsc_var_threshold,
    )?;
    let live: Vec<usize> = (0..mask.len()).filter(|&p| mask[p]).collect();
    let outcomes: Vec<PixelOutcome> = live
        .par_iter()
        .map(|&p| -> Result<PixelOutcome, PreprocessError> {
            let smoothed = smoother.apply(&out.pixel_f64(p))?;
            let corrected = match model.correct_values(&smoothed) {
                Ok((values, _)) => values,
                Err(PreprocessError::Correction(_)) => return Ok(PixelOutcome::EmscFailed),
                Err(e) => return Err(e),
            };
            Ok(match minmax_values(&corrected) {
                Ok(v) => PixelOutcome::Ok(v),
                Err(_) => PixelOutcome::NormFailed,
            })
        })
        .collect::<Result<_, _>>()?;

    let (mut emsc_failures, mut normalization_failures) = (0, 0);
    for (&p, outcome) in live.iter().zip(outcomes) {
        match outcome {
            PixelOutcome::Ok(values) => out.set_pixel(p, &values),
            PixelOutcome::EmscFailed => {
                emsc_failures += 1;
                mask[p] = false;
            }
            PixelOutcome::NormFailed => {
                normalization_failures += 1;
                mask[p] = false;
            }
        }
    }

    let second_outlier_pass = screen(&out, &mut mask, config)?;
    out.set_mask(mask)?;
    out.zero_masked();
    let report = PipelineReport {
        sample_id: mosaic.sample_id.clone(),
        pixels: mosaic.n_pixels(),
        segmentation: seg.counts(),
        first_outlier_pass,
        emsc_failures,
        normalization_failures,
        second_outlier_pass,
        live_pixels: out.live_count(),
        patches: None,
    };
    Ok((out, report))
}
