//! Flat JSON run configuration. Unknown keys are rejected; missing keys take
//! the defaults below.

use std::path::{Path, PathBuf};

use carenet_core::carenet::{stages, CaReNetConfig, Stage, TrainConfig};
use carenet_core::labels::Task;
use carenet_core::preprocess::PipelineConfig;
use carenet_core::spectra::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; `--seed` and `CARENET_SEED` take part in resolving it.
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub task: String,

    pub height: usize,
    pub width: usize,
    pub fingerprint_channels: usize,
    pub raw_range: (f64, f64),
    pub n_samples: usize,
    pub n_classes: usize,
    pub tissue_fraction: f64,
    pub paraffin_amplitude: f64,
    pub vapor_amplitude: f64,
    pub baseline_amplitude: f64,
    pub noise_sigma: f64,

    pub amide_window: (f64, f64),
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

    pub spectral_path: Vec<Stage>,
    pub spatial_path: Vec<Stage>,
    pub fusion_dense: usize,

    pub batch_size: usize,
    pub epochs: usize,
    pub folds: usize,
    pub initial_lr: f64,
    pub t_mul: f64,
    pub m_mul: f64,
    pub alpha: f64,
    pub augment: bool,

    pub top_n: usize,
    pub signed_importance: bool,

    /// Inputs from outside `--out`; by default every stage reads what the
    /// previous one wrote under `--out`.
    pub raw_dir: Option<PathBuf>,
    pub labels_path: Option<PathBuf>,
    pub library_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let pipe = PipelineConfig::default();
        let net = CaReNetConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            seed: None,
            workers: None,
            task: "subtype".into(),
            height: synth.height,
            width: synth.width,
            fingerprint_channels: synth.fingerprint_channels,
            raw_range: synth.raw_range,
            n_samples: synth.n_samples,
            n_classes: synth.n_classes,
            tissue_fraction: synth.tissue_fraction,
            paraffin_amplitude: synth.paraffin_amplitude,
            vapor_amplitude: synth.vapor_amplitude,
            baseline_amplitude: synth.baseline_amplitude,
            noise_sigma: synth.noise_sigma,
            amide_window: pipe.amide_window,
            paraffin_window: pipe.paraffin_window,
            biofingerprint: pipe.biofingerprint,
            outlier_pcs: pipe.outlier_pcs,
            outlier_ci: pipe.outlier_ci,
            savgol_window: pipe.savgol_window,
            savgol_order: pipe.savgol_order,
            emsc_poly_order: pipe.emsc_poly_order,
            emsc_var_threshold: pipe.emsc_var_threshold,
            patch_size: pipe.patch_size,
            patch_zero_fraction: pipe.patch_zero_fraction,
            kmeans_seed: pipe.kmeans_seed,
            kmeans_max_iter: pipe.kmeans_max_iter,
            kmeans_restarts: pipe.kmeans_restarts,
            spectral_path: net.spectral_path,
            spatial_path: net.spatial_path,
            fusion_dense: net.fusion_dense,
            batch_size: train.batch_size,
            epochs: train.epochs,
            folds: train.folds,
            initial_lr: train.initial_lr,
            t_mul: train.t_mul,
            m_mul: train.m_mul,
            alpha: train.alpha,
            augment: train.augment,
            top_n: 30,
            signed_importance: false,
            raw_dir: None,
            labels_path: None,
            library_path: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let key = |k: &str, e: &dyn std::fmt::Display| CliError::Config(format!("{k}: {e}"));
        Task::parse(&self.task).map_err(|e| key("task", &e))?;
        self.synth().validate().map_err(|e| key("synth", &e))?;
        self.pipeline()
            .validate()
            .map_err(|e| key("preprocess", &e))?;
        self.network(1).validate().map_err(|e| key("network", &e))?;
        self.train(0).validate().map_err(|e| key("train", &e))?;
        if self.workers == Some(0) {
            return Err(key("workers", &"must be at least 1"));
        }
        if self.top_n == 0 {
            return Err(key("top_n", &"must be at least 1"));
        }
        for (name, path) in [
            ("raw_dir", &self.raw_dir),
            ("labels_path", &self.labels_path),
            ("library_path", &self.library_path),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(key(name, &format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Seed precedence: flag, then config, then `CARENET_SEED`, then 0.
    pub fn resolve_seed(&self, flag: Option<u64>, env: Option<&str>) -> Result<u64, CliError> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match env {
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("CARENET_SEED '{v}' is not an integer"))),
            None => Ok(0),
        }
    }

    pub fn task(&self) -> Task {
        Task::parse(&self.task).expect("validated task")
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            height: self.height,
            width: self.width,
            fingerprint_channels: self.fingerprint_channels,
            raw_range: self.raw_range,
            n_samples: self.n_samples,
            n_classes: self.n_classes,
            tissue_fraction: self.tissue_fraction,
            paraffin_amplitude: self.paraffin_amplitude,
            vapor_amplitude: self.vapor_amplitude,
            baseline_amplitude: self.baseline_amplitude,
            noise_sigma: self.noise_sigma,
            ..SynthConfig::default()
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            amide_window: self.amide_window,
            paraffin_window: self.paraffin_window,
            biofingerprint: self.biofingerprint,
            outlier_pcs: self.outlier_pcs,
            outlier_ci: self.outlier_ci,
            savgol_window: self.savgol_window,
            savgol_order: self.savgol_order,
            emsc_poly_order: self.emsc_poly_order,
            emsc_var_threshold: self.emsc_var_threshold,
            patch_size: self.patch_size,
            patch_zero_fraction: self.patch_zero_fraction,
            kmeans_seed: self.kmeans_seed,
            kmeans_max_iter: self.kmeans_max_iter,
            kmeans_restarts: self.kmeans_restarts,
        }
    }

    pub fn network(&self, channels: usize) -> CaReNetConfig {
        CaReNetConfig {
            patch_size: self.patch_size,
            channels,
            spectral_path: self.spectral_path.clone(),
            spatial_path: self.spatial_path.clone(),
            fusion_dense: self.fusion_dense,
        }
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            folds: self.folds,
            seed,
            initial_lr: self.initial_lr,
            t_mul: self.t_mul,
            m_mul: self.m_mul,
            alpha: self.alpha,
            augment: self.augment,
        }
    }
}

/// The desk-scale configuration shipped as `configs/desk.json`.
pub fn desk_config() -> RunConfig {
    RunConfig {
        fingerprint_channels: 64,
        raw_range: (1950.0, 850.0),
        n_samples: 12,
        n_classes: 3,
        tissue_fraction: 0.75,
        spectral_path: stages(&[16, 32]),
        spatial_path: stages(&[16, 32]),
        fusion_dense: 32,
        epochs: 100,
        top_n: 4,
        ..RunConfig::default()
    }
}
