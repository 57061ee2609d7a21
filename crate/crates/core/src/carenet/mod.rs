//! The dual-path network: a spectral path of 1×1 convolutions and a spatial
//! path of 3×3 convolutions share the input patch, each ends in global
//! average pooling, and a dense trunk fuses them into a task head.

mod augment;
mod train;

pub use augment::{apply_d4, augment_patch, D4};
pub use train::{
    dev_metric, dev_scores, patch_tensor, predict_patch, train_model, write_history, EpochRecord,
    Example, TrainConfig, TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::autonn::{Activation, BranchSpec, GraphSpec, LayerSpec, NetworkGraph, NnError};
use crate::labels::{EncodingKind, LabelError, TaskSchema};

pub const SPECTRAL: &str = "spectral";
pub const SPATIAL: &str = "spatial";

#[derive(Debug, thiserror::Error)]
pub enum CarenetError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("training error: {0}")]
    Training(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One conv → relu (→ maxpool) stage. A bare integer in JSON means a
/// pooled stage with that many filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "StageRepr")]
pub struct Stage {
    pub filters: usize,
    pub pool: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StageRepr {
    Filters(usize),
    Full { filters: usize, pool: bool },
}

impl From<StageRepr> for Stage {
    fn from(r: StageRepr) -> Stage {
        match r {
            StageRepr::Filters(filters) => Stage {
                filters,
                pool: true,
            },
            StageRepr::Full { filters, pool } => Stage { filters, pool },
        }
    }
}

pub fn stages(filters: &[usize]) -> Vec<Stage> {
    filters
        .iter()
        .map(|&filters| Stage {
            filters,
            pool: true,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaReNetConfig {
    pub patch_size: usize,
    pub channels: usize,
    pub spectral_path: Vec<Stage>,
    pub spatial_path: Vec<Stage>,
    pub fusion_dense: usize,
}

impl Default for CaReNetConfig {
    fn default() -> Self {
        CaReNetConfig {
            patch_size: 32,
            channels: 467,
            spectral_path: stages(&[128, 256, 512]),
            spatial_path: stages(&[128, 256, 512]),
            fusion_dense: 512,
        }
    }
}

impl CaReNetConfig {
    /// Desk-scale network used by the tests and the synthetic study.
    pub fn desk(channels: usize) -> CaReNetConfig {
        CaReNetConfig {
            patch_size: 32,
            channels,
            spectral_path: stages(&[16, 32]),
            spatial_path: stages(&[16, 32]),
            fusion_dense: 32,
        }
    }

    pub fn validate(&self) -> Result<(), CarenetError> {
        if self.patch_size == 0 || self.channels == 0 || self.fusion_dense == 0 {
            return Err(CarenetError::Config(
                "patch_size, channels and fusion_dense must be positive".into(),
            ));
        }
        for (name, path) in [
            (SPECTRAL, &self.spectral_path),
            (SPATIAL, &self.spatial_path),
        ] {
            if path.is_empty() {
                return Err(CarenetError::Config(format!("{name} path has no stages")));
            }
            if path.iter().any(|s| s.filters == 0) {
                return Err(CarenetError::Config(format!(
                    "{name} path has a stage with zero filters"
                )));
            }
        }
        Ok(())
    }
}

fn path_layers(path: &[Stage], kernel: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for s in path {
        layers.push(LayerSpec::Conv2d {
            filters: s.filters,
            kernel,
        });
        layers.push(LayerSpec::Activation {
            function: Activation::Relu,
        });
        if s.pool {
            layers.push(LayerSpec::MaxPool2d);
        }
    }
    layers.push(LayerSpec::GlobalAvgPool);
    layers
}

pub fn head_activation(kind: EncodingKind) -> Activation {
    match kind {
        EncodingKind::Binary | EncodingKind::Ordinal => Activation::Sigmoid,
        EncodingKind::OneHot => Activation::Softmax,
        EncodingKind::Regression => Activation::Linear,
    }
}

pub fn carenet_spec(
    config: &CaReNetConfig,
    schema: &TaskSchema,
) -> Result<GraphSpec, CarenetError> {
    config.validate()?;
    Ok(GraphSpec {
        input_shape: [config.patch_size, config.patch_size, config.channels],
        branches: vec![
            BranchSpec {
                name: SPECTRAL.into(),
                layers: path_layers(&config.spectral_path, 1),
            },
            BranchSpec {
                name: SPATIAL.into(),
                layers: path_layers(&config.spatial_path, 3),
            },
        ],
        trunk: vec![
            LayerSpec::Dense {
                units: config.fusion_dense,
            },
            LayerSpec::Activation {
                function: Activation::Relu,
            },
            LayerSpec::Dense {
                units: schema.output_dim,
            },
        ],
        head: head_activation(schema.kind),
    })
}

pub fn build_carenet(
    config: &CaReNetConfig,
    schema: &TaskSchema,
    seed: u64,
) -> Result<NetworkGraph, CarenetError> {
    Ok(NetworkGraph::build(carenet_spec(config, schema)?, seed)?)
}

pub fn conv_params(kernel: usize, cin: usize, filters: usize) -> usize {
    kernel * kernel * cin * filters + filters
}

pub fn dense_params(inputs: usize, outputs: usize) -> usize {
    inputs * outputs + outputs
}

/// Closed-form parameter count.
pub fn count_params(config: &CaReNetConfig, schema: &TaskSchema) -> usize {
    let path = |stages: &[Stage], kernel| {
        let mut cin = config.channels;
        let mut n = 0;
        for s in stages {
            n += conv_params(kernel, cin, s.filters);
            cin = s.filters;
        }
        (n, cin)
    };
    let (spec_n, spec_out) = path(&config.spectral_path, 1);
    let (spat_n, spat_out) = path(&config.spatial_path, 3);
    spec_n
        + spat_n
        + dense_params(spec_out + spat_out, config.fusion_dense)
        + dense_params(config.fusion_dense, schema.output_dim)
}
