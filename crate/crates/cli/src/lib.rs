//! Config-driven driver for the synthetic study. Every subcommand reads and
//! writes under one output directory and refreshes `manifest.json` there.

mod config;
mod manifest;
mod stages;

pub use config::{desk_config, RunConfig};
pub use manifest::{write_manifest, ArtifactEntry, RunManifest};
pub use stages::{synthetic_record, Layout};

use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub(crate) fn stage(stage: &'static str) -> impl Fn(&dyn std::fmt::Display) -> CliError {
        move |e| CliError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::Subcommand)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Generate labelled synthetic mosaics and the reference library.
    Synth,
    /// Segment, screen, smooth, correct and normalise every raw mosaic.
    Preprocess,
    /// Split, then train one model per cross-validation fold.
    Train,
    /// Score the held-out test patches with every fold model.
    Predict,
    /// Channel importance, path contribution and Grad-CAM heatmaps.
    Explain,
    /// Patch metrics per fold and per-sample votes.
    Evaluate,
    /// All stages in order.
    Pipeline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::Explain => "explain",
            Command::Evaluate => "evaluate",
            Command::Pipeline => "pipeline",
        }
    }
}

/// Command-line overrides. Flags win over config keys.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub task: Option<String>,
}

/// Seeds and headline numbers from one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub voted_accuracy: Option<f64>,
    pub top_band: Option<(f64, f64)>,
}

/// Resolves the configuration and runs one subcommand inside a worker pool.
pub fn run(command: Command, opts: &Options) -> Result<RunSummary, CliError> {
    let mut cfg = match &opts.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cfg.resolve_seed(opts.seed, std::env::var("CARENET_SEED").ok().as_deref())?;
    cfg.seed = Some(seed);
    if let Some(w) = opts.workers {
        cfg.workers = Some(w);
    }
    if let Some(t) = &opts.task {
        cfg.task = t.clone();
    }
    cfg.validate()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("workers: {e}")))?;
    let layout = Layout::new(&opts.out, &cfg);
    std::fs::create_dir_all(&layout.out)?;
    // Worker count does not change any artifact, so it stays out of the echo.
    let echoed = RunConfig {
        workers: None,
        ..cfg.clone()
    };
    std::fs::write(layout.out.join("config.json"), echoed.to_json())?;

    let summary = pool.install(|| stages::dispatch(command, &cfg, seed, &layout))?;
    write_manifest(&layout, command, &cfg, seed)?;
    Ok(summary)
}
