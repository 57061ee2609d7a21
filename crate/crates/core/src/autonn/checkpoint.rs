//! Weight checkpoints: a binary blob of float64 LE tensors plus a JSON
//! sidecar describing the architecture and tensor shapes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::graph::{GraphSpec, NetworkGraph};
use super::NnError;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"CRNW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub layer: String,
    pub role: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub version: u32,
    pub graph: GraphSpec,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn entries(graph: &NetworkGraph) -> Vec<TensorEntry> {
    graph
        .layers()
        .filter(|l| l.spec.has_params())
        .flat_map(|l| {
            let kernel = match l.spec {
                super::LayerSpec::Conv2d { filters, kernel } => {
                    vec![kernel, kernel, l.in_shape[2], filters]
                }
                _ => vec![l.in_shape[0], l.out_shape[0]],
            };
            [
                TensorEntry {
                    layer: l.name.clone(),
                    role: "kernel".into(),
                    shape: kernel,
                },
                TensorEntry {
                    layer: l.name.clone(),
                    role: "bias".into(),
                    shape: vec![l.bias.len()],
                },
            ]
        })
        .collect()
}

pub fn encode_weights(graph: &NetworkGraph) -> Vec<u8> {
    let params = graph.params();
    let mut out = Vec::with_capacity(12 + graph.param_count() * 8 + params.len() * 8);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Writes `path` and its `.json` sidecar.
pub fn save_checkpoint(
    graph: &NetworkGraph,
    path: &Path,
    metadata: serde_json::Value,
) -> Result<(), NnError> {
    let sidecar = CheckpointSidecar {
        version: WEIGHTS_VERSION,
        graph: graph.spec.clone(),
        tensors: entries(graph),
        metadata,
    };
    std::fs::write(path, encode_weights(graph))?;
    let json =
        serde_json::to_string_pretty(&sidecar).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkGraph, serde_json::Value), NnError> {
    let json = std::fs::read_to_string(sidecar_path(path))?;
    let sidecar: CheckpointSidecar =
        serde_json::from_str(&json).map_err(|e| NnError::Checkpoint(format!("sidecar: {e}")))?;
    if sidecar.version != WEIGHTS_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported version {}",
            sidecar.version
        )));
    }
    let mut graph = NetworkGraph::build(sidecar.graph, 0)?;
    if entries(&graph) != sidecar.tensors {
        return Err(NnError::Checkpoint(
            "sidecar tensor list does not match the architecture".into(),
        ));
    }
    let bytes = std::fs::read(path)?;
    decode_weights(&mut graph, &bytes)?;
    Ok((graph, sidecar.metadata))
}

/// Overwrites `graph`'s parameters from an encoded blob.
pub fn decode_weights(graph: &mut NetworkGraph, bytes: &[u8]) -> Result<(), NnError> {
    let bad = |m: &str| NnError::Checkpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(bad("not a weights file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != WEIGHTS_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let mut params = graph.params_mut();
    if count != params.len() {
        return Err(NnError::Checkpoint(format!(
            "{count} tensors stored, graph has {}",
            params.len()
        )));
    }
    let mut pos = 12;
    for (i, p) in params.iter_mut().enumerate() {
        let len_bytes = bytes.get(pos..pos + 8).ok_or_else(|| bad("truncated"))?;
        let len = u64::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
        pos += 8;
        if len != p.len() {
            return Err(NnError::Checkpoint(format!(
                "tensor {i}: {len} values stored, expected {}",
                p.len()
            )));
        }
        let blob = bytes
            .get(pos..pos + 8 * len)
            .ok_or_else(|| bad("truncated"))?;
        for (v, chunk) in p.iter_mut().zip(blob.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        pos += 8 * len;
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(())
}
