use serde::{Deserialize, Serialize};

use super::PreprocessError;

/// Every constant of the preprocessing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// (hi, lo) cm⁻¹ window for the first clustering.
    pub amide_window: (f64, f64),
    /// (hi, lo) cm⁻¹ window for the second clustering.
    pub paraffin_window: (f64, f64),
    pub biofingerprint: (f64, f64),
    pub outlier_pcs: usize,
    pub outlier_ci: f64,
    pub savgol_window: usize,
    pub savgol_order: usize,
    pub emsc_poly_order: usize,
    pub emsc_var_threshold: f64,
    pub patch_size: usize,
    pub patch_zero_fraction: f64,
    pub kmeans_seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_restarts: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            amide_window: (1700.0, 1500.0),
            paraffin_window: (1480.0, 1450.0),
            biofingerprint: (1800.0, 900.0),
            outlier_pcs: 10,
            outlier_ci: 0.95,
            savgol_window: 11,
            savgol_order: 2,
            emsc_poly_order: 4,
            emsc_var_threshold: 0.99,
            patch_size: 32,
            patch_zero_fraction: 0.5,
            kmeans_seed: 0,
            kmeans_max_iter: 100,
            kmeans_restarts: 5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |msg: String| Err(PreprocessError::Config(msg));
        if self.savgol_window.is_multiple_of(2) {
            return bad(format!("savgol_window {} must be odd", self.savgol_window));
        }
        if self.savgol_window <= self.savgol_order {
            return bad(format!(
                "savgol_window {} must exceed savgol_order {}",
                self.savgol_window, self.savgol_order
            ));
        }
        if !(self.patch_zero_fraction > 0.0 && self.patch_zero_fraction <= 1.0) {
            return bad(format!(
                "patch_zero_fraction {} not in (0, 1]",
                self.patch_zero_fraction
            ));
        }
        if !(self.outlier_ci > 0.0 && self.outlier_ci < 1.0) {
            return bad(format!("outlier_ci {} not in (0, 1)", self.outlier_ci));
        }
        if !(self.emsc_var_threshold > 0.0 && self.emsc_var_threshold <= 1.0) {
            return bad(format!(
                "emsc_var_threshold {} not in (0, 1]",
                self.emsc_var_threshold
            ));
        }
        for (name, (hi, lo)) in [
            ("amide_window", self.amide_window),
            ("paraffin_window", self.paraffin_window),
            ("biofingerprint", self.biofingerprint),
        ] {
            if hi <= lo {
                return bad(format!("{name} must be given as (hi, lo) with hi > lo"));
            }
        }
        if self.patch_size == 0 || self.outlier_pcs == 0 {
            return bad("patch_size and outlier_pcs must be positive".into());
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iter == 0 {
            return bad("kmeans_restarts and kmeans_max_iter must be positive".into());
        }
        Ok(())
    }
}
