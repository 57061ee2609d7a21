//! `manifest.json`: every file under the output directory with its SHA-256,
//! the external inputs, and the seeds used.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::stages::{fold_seed, Layout};
use crate::{CliError, Command, RunConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub synth: u64,
    pub split: u64,
    pub folds: Vec<u64>,
    pub kmeans: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: Command,
    pub task: String,
    pub seeds: Seeds,
    pub inputs: Vec<ArtifactEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            files_under(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn entry(path: &Path, shown: String) -> Result<ArtifactEntry, CliError> {
    let bytes = std::fs::read(path)?;
    Ok(ArtifactEntry {
        path: shown,
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Entries for a file or every file below a directory, keyed relative to `root`.
fn entries(root: &Path, target: &Path) -> Result<Vec<ArtifactEntry>, CliError> {
    let mut files = Vec::new();
    if target.is_dir() {
        files_under(target, &mut files)?;
    } else if target.exists() {
        files.push(target.to_path_buf());
    }
    let mut out = files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(root).unwrap_or(f);
            entry(f, rel.to_string_lossy().replace('\\', "/"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

pub fn write_manifest(
    layout: &Layout,
    command: Command,
    cfg: &RunConfig,
    seed: u64,
) -> Result<RunManifest, CliError> {
    let manifest_path = layout.out.join("manifest.json");
    let artifacts = entries(&layout.out, &layout.out)?
        .into_iter()
        .filter(|e| e.path != "manifest.json")
        .collect();
    let mut inputs = Vec::new();
    for p in [&cfg.raw_dir, &cfg.labels_path, &cfg.library_path]
        .into_iter()
        .flatten()
    {
        inputs.extend(entries(Path::new(""), p)?);
    }
    let manifest = RunManifest {
        command,
        task: cfg.task.clone(),
        seeds: Seeds {
            master: seed,
            synth: seed,
            split: seed,
            folds: (0..cfg.folds).map(|f| fold_seed(seed, f)).collect(),
            kmeans: cfg.kmeans_seed,
        },
        inputs,
        artifacts,
    };
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(manifest_path, text)?;
    Ok(manifest)
}
