//! Grad-CAM heatmaps on the spatial path, per-wavenumber importance from the
//! first spectral kernels, and the split of fused evidence between paths.

mod output;

pub use output::{write_bands_csv, write_heatmap_csv, write_heatmap_png, write_importance_csv};

use rayon::prelude::*;
use serde::Serialize;

use crate::autonn::{LayerSpec, NetworkGraph, NnError};
use crate::carenet::{patch_tensor, SPATIAL, SPECTRAL};
use crate::spectra::{Patch, WavenumberAxis};

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("graph error: {0}")]
    Graph(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("output error: {0}")]
    Output(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Row-major, in [0, 1].
    pub values: Vec<f64>,
    pub source_layer: String,
    pub class_index: usize,
}

impl Heatmap {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Index of the Grad-CAM feature layer in the spatial branch: the activation
/// directly after the last convolution, or the convolution itself.
fn cam_layer(graph: &NetworkGraph) -> Result<(usize, usize), ExplainError> {
    let bi = graph
        .branches
        .iter()
        .position(|b| b.name == SPATIAL)
        .ok_or_else(|| ExplainError::Graph(format!("no '{SPATIAL}' branch")))?;
    let layers = &graph.branches[bi].layers;
    let conv = layers
        .iter()
        .rposition(|l| matches!(l.spec, LayerSpec::Conv2d { .. }))
        .ok_or_else(|| ExplainError::Graph(format!("no convolution in the '{SPATIAL}' branch")))?;
    let li = match layers.get(conv + 1) {
        Some(l) if matches!(l.spec, LayerSpec::Activation { .. }) => conv + 1,
        _ => conv,
    };
    Ok((bi, li))
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn bilinear_resize(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let coord = |dst: usize, n_in: usize, n_out: usize| {
        let s =
            ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let (r0, r1, fr) = coord(r, h, out_h);
        for c in 0..out_w {
            let (c0, c1, fc) = coord(c, w, out_w);
            let top = src[r0 * w + c0] * (1.0 - fc) + src[r0 * w + c1] * fc;
            let bottom = src[r1 * w + c0] * (1.0 - fc) + src[r1 * w + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// Grad-CAM of the class logit. For single-logit heads class 1 uses the
/// logit and class 0 its negation.
pub fn grad_cam(
    graph: &NetworkGraph,
    patch: &Patch,
    class_index: usize,
) -> Result<Heatmap, ExplainError> {
    let (bi, li) = cam_layer(graph)?;
    let dim = graph.output_dim();
    let mut dlogits = vec![0.0; dim];
    match dim {
        1 if class_index < 2 => dlogits[0] = if class_index == 1 { 1.0 } else { -1.0 },
        _ if class_index < dim => dlogits[class_index] = 1.0,
        _ => {
            return Err(ExplainError::Input(format!(
                "class {class_index} out of range for {dim} outputs"
            )))
        }
    }
    let x = patch_tensor(patch);
    let trace = graph.forward(&x)?;
    let (_, acts) = graph.backward(&x, &trace, &dlogits, true);
    let acts = acts.expect("activation gradients requested");
    let a = &trace.branches[bi][li];
    let g = &acts.branches[bi][li];
    let (h, w, k) = a
        .dims3()
        .ok_or_else(|| ExplainError::Graph("Grad-CAM layer is not a feature map".into()))?;
    let mut alpha = vec![0.0; k];
    for px in g.data.chunks_exact(k) {
        for (al, v) in alpha.iter_mut().zip(px) {
            *al += v;
        }
    }
    alpha.iter_mut().for_each(|v| *v /= (h * w) as f64);
    let cam: Vec<f64> = a
        .data
        .chunks_exact(k)
        .map(|px| {
            px.iter()
                .zip(&alpha)
                .map(|(v, al)| v * al)
                .sum::<f64>()
                .max(0.0)
        })
        .collect();
    let mut values = bilinear_resize(&cam, h, w, patch.size, patch.size);
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
    Ok(Heatmap {
        height: patch.size,
        width: patch.size,
        values,
        source_layer: graph.branches[bi].layers[li].name.clone(),
        class_index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub start: usize,
    pub end: usize,
    pub wavenumber_hi: f64,
    pub wavenumber_lo: f64,
    pub score: f64,
}

impl Band {
    pub fn contains_index(&self, i: usize) -> bool {
        (self.start..=self.end).contains(&i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelImportance {
    pub scores: Vec<f64>,
    pub top_bands: Vec<Band>,
    pub signed: bool,
}

/// Per-channel sums over the first spectral convolution's filters, with
/// `top_n` channels grouped into contiguous bands. `signed` sums raw kernel
/// values instead of magnitudes and ranks channels by the magnitude of the sum.
pub fn channel_importance(
    graph: &NetworkGraph,
    axis: &WavenumberAxis,
    top_n: usize,
    signed: bool,
) -> Result<ChannelImportance, ExplainError> {
    let branch = graph
        .branch(SPECTRAL)
        .ok_or_else(|| ExplainError::Graph(format!("no '{SPECTRAL}' branch")))?;
    let first = branch
        .layers
        .first()
        .filter(|l| matches!(l.spec, LayerSpec::Conv2d { kernel: 1, .. }))
        .ok_or_else(|| {
            ExplainError::Graph("spectral path must start with a 1×1 convolution".into())
        })?;
    let c = first.in_shape[2];
    let f = first.out_shape[2];
    if axis.len() != c {
        return Err(ExplainError::Input(format!(
            "axis has {} points, network input has {c} channels",
            axis.len()
        )));
    }
    let scores: Vec<f64> = (0..c)
        .map(|ci| {
            let row = &first.weights[ci * f..(ci + 1) * f];
            if signed {
                row.iter().sum()
            } else {
                row.iter().map(|v| v.abs()).sum()
            }
        })
        .collect();
    Ok(ChannelImportance {
        top_bands: group_bands(&scores, axis, top_n),
        scores,
        signed,
    })
}

/// Contiguous runs among the `top_n` highest-magnitude non-zero channels,
/// strongest run first.
pub fn group_bands(scores: &[f64], axis: &WavenumberAxis, top_n: usize) -> Vec<Band> {
    let mut ranked: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] != 0.0).collect();
    ranked.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()).then(a.cmp(&b)));
    ranked.truncate(top_n);
    ranked.sort_unstable();
    let mut bands: Vec<Band> = Vec::new();
    for i in ranked {
        match bands.last_mut() {
            Some(b) if b.end + 1 == i => {
                b.end = i;
                b.score += scores[i];
            }
            _ => bands.push(Band {
                start: i,
                end: i,
                wavenumber_hi: 0.0,
                wavenumber_lo: 0.0,
                score: scores[i],
            }),
        }
    }
    for b in &mut bands {
        b.wavenumber_hi = axis.point(b.start);
        b.wavenumber_lo = axis.point(b.end);
    }
    bands.sort_by(|a, b| {
        b.score
            .abs()
            .total_cmp(&a.score.abs())
            .then(a.start.cmp(&b.start))
    });
    bands
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathContribution {
    pub spectral: f64,
    pub spatial: f64,
    /// Patches whose fused evidence was entirely zero and were skipped.
    pub skipped: usize,
}

/// Share of `Σ |gᵢ·Wᵢⱼ|` over the fusion dense layer coming from each path's
/// GAP features, averaged over patches.
pub fn path_contribution(
    graph: &NetworkGraph,
    patches: &[Patch],
) -> Result<PathContribution, ExplainError> {
    let fusion = graph
        .trunk
        .first()
        .filter(|l| matches!(l.spec, LayerSpec::Dense { .. }))
        .ok_or_else(|| {
            ExplainError::Graph("fusion dense layer must follow the concatenated GAPs".into())
        })?;
    let mut ranges = Vec::new();
    let mut off = 0;
    for b in &graph.branches {
        let n = b.layers.last().map_or(0, |l| l.out_shape[0]);
        ranges.push((b.name.as_str(), off..off + n));
        off += n;
    }
    let range = |name: &str| {
        ranges
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| ExplainError::Graph(format!("no '{name}' branch")))
    };
    let (spec_r, spat_r) = (range(SPECTRAL)?, range(SPATIAL)?);
    if patches.is_empty() {
        return Err(ExplainError::Input("no patches".into()));
    }
    let units = fusion.out_shape[0];
    let per: Vec<Option<(f64, f64)>> = patches
        .par_iter()
        .map(|p| {
            let trace = graph.forward(&patch_tensor(p))?;
            let g = &trace.concat.data;
            let part = |r: std::ops::Range<usize>| -> f64 {
                r.map(|i| {
                    fusion.weights[i * units..(i + 1) * units]
                        .iter()
                        .map(|w| (g[i] * w).abs())
                        .sum::<f64>()
                })
                .sum()
            };
            let (s, t) = (part(spec_r.clone()), part(spat_r.clone()));
            Ok((s + t > 0.0).then(|| (s / (s + t), t / (s + t))))
        })
        .collect::<Result<_, NnError>>()?;
    let kept: Vec<(f64, f64)> = per.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(ExplainError::Input(
            "every patch has zero fused evidence".into(),
        ));
    }
    let n = kept.len() as f64;
    let spectral = kept.iter().map(|k| k.0).sum::<f64>() / n;
    Ok(PathContribution {
        spectral,
        spatial: 1.0 - spectral,
        skipped: patches.len() - kept.len(),
    })
}

/// Grad-CAM target layer name, for reporting.
pub fn grad_cam_layer(graph: &NetworkGraph) -> Result<String, ExplainError> {
    let (bi, li) = cam_layer(graph)?;
    Ok(graph.branches[bi].layers[li].name.clone())
}
