//! PNG and CSV writers for explainability artifacts.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{ChannelImportance, ExplainError, Heatmap};
use crate::spectra::WavenumberAxis;

/// 8-bit grayscale PNG, white = 1.
pub fn write_heatmap_png(path: &Path, heatmap: &Heatmap) -> Result<(), ExplainError> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, heatmap.width as u32, heatmap.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let pixels: Vec<u8> = heatmap
        .values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut writer = enc
        .write_header()
        .map_err(|e| ExplainError::Output(e.to_string()))?;
    writer
        .write_image_data(&pixels)
        .map_err(|e| ExplainError::Output(e.to_string()))?;
    writer
        .finish()
        .map_err(|e| ExplainError::Output(e.to_string()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, ExplainError> {
    csv::Writer::from_path(path)
        .map_err(|e| ExplainError::Output(format!("{}: {e}", path.display())))
}

fn out_err(e: csv::Error) -> ExplainError {
    ExplainError::Output(e.to_string())
}

/// `row,col,value` CSV.
pub fn write_heatmap_csv(path: &Path, heatmap: &Heatmap) -> Result<(), ExplainError> {
    let mut w = csv_writer(path)?;
    w.write_record(["row", "col", "value"]).map_err(out_err)?;
    for r in 0..heatmap.height {
        for c in 0..heatmap.width {
            w.write_record([
                r.to_string(),
                c.to_string(),
                format!("{:.9}", heatmap.at(r, c)),
            ])
            .map_err(out_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `wavenumber,score` CSV.
pub fn write_importance_csv(
    path: &Path,
    axis: &WavenumberAxis,
    ci: &ChannelImportance,
) -> Result<(), ExplainError> {
    let mut w = csv_writer(path)?;
    w.write_record(["wavenumber", "score"]).map_err(out_err)?;
    for (i, s) in ci.scores.iter().enumerate() {
        w.write_record([format!("{:.4}", axis.point(i)), format!("{s:.9}")])
            .map_err(out_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Ranked band table: `rank,wavenumber_hi,wavenumber_lo,score`.
pub fn write_bands_csv(path: &Path, ci: &ChannelImportance) -> Result<(), ExplainError> {
    let mut w = csv_writer(path)?;
    w.write_record(["rank", "wavenumber_hi", "wavenumber_lo", "score"])
        .map_err(out_err)?;
    for (rank, b) in ci.top_bands.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            format!("{:.1}", b.wavenumber_hi),
            format!("{:.1}", b.wavenumber_lo),
            format!("{:.9}", b.score),
        ])
        .map_err(out_err)?;
    }
    w.flush()?;
    Ok(())
}
