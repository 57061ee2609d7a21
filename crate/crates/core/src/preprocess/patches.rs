use serde::Serialize;

use crate::spectra::{HyperMosaic, Patch};

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
    pub candidates: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PatchCounts {
    pub candidates: usize,
    pub kept: usize,
    pub excluded: usize,
}

impl PatchSet {
    pub fn counts(&self) -> PatchCounts {
        PatchCounts {
            candidates: self.candidates,
            kept: self.patches.len(),
            excluded: self.excluded,
        }
    }
}

/// Non-overlapping `size`×`size` tiling. Edges are zero-padded and padded
/// pixels count as zeroed; a tile is dropped once its zeroed pixels reach
/// `zero_fraction` of the tile.
pub fn extract_patches(mosaic: &HyperMosaic, size: usize, zero_fraction: f64) -> PatchSet {
    let (h, w, c) = (mosaic.height(), mosaic.width(), mosaic.channels());
    let rows = h.div_ceil(size);
    let cols = w.div_ceil(size);
    let limit = (size * size) as f64 * zero_fraction;
    let mut patches = Vec::new();
    let mut excluded = 0;
    for tr in 0..rows {
        for tc in 0..cols {
            let (r0, c0) = (tr * size, tc * size);
            let mut data = vec![0.0f32; size * size * c];
            let mut zero_count = 0;
            for dy in 0..size {
                for dx in 0..size {
                    let (y, x) = (r0 + dy, c0 + dx);
                    if y >= h || x >= w {
                        zero_count += 1;
                        continue;
                    }
                    let p = y * w + x;
                    if !mosaic.mask()[p] {
                        zero_count += 1;
                        continue;
                    }
                    let dst = (dy * size + dx) * c;
                    data[dst..dst + c].copy_from_slice(mosaic.pixel(p));
                }
            }
            if zero_count as f64 >= limit {
                excluded += 1;
                continue;
            }
            patches.push(Patch {
                size,
                channels: c,
                data,
                origin: (r0, c0),
                zero_count,
                sample_id: mosaic.sample_id.clone(),
                patient_id: mosaic.patient_id.clone(),
            });
        }
    }
    PatchSet {
        patches,
        candidates: rows * cols,
        excluded,
    }
}
