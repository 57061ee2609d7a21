use serde::{Deserialize, Serialize};

use super::{SpectraError, WavenumberAxis};

/// A single absorbance spectrum on a wavenumber grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub axis: WavenumberAxis,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn new(axis: WavenumberAxis, values: Vec<f64>) -> Result<Self, SpectraError> {
        if values.len() != axis.len() {
            return Err(SpectraError::Validation(format!(
                "spectrum has {} values but axis has {} points",
                values.len(),
                axis.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SpectraError::Validation(
                "spectrum contains non-finite values".into(),
            ));
        }
        Ok(Self { axis, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// H×W×C spectral cube, channel-last, with a live-tissue mask.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperMosaic {
    height: usize,
    width: usize,
    axis: WavenumberAxis,
    cube: Vec<f32>,
    mask: Vec<bool>,
    pub sample_id: String,
    pub patient_id: String,
}

impl HyperMosaic {
    pub fn new(
        height: usize,
        width: usize,
        axis: WavenumberAxis,
        cube: Vec<f32>,
        mask: Vec<bool>,
        sample_id: impl Into<String>,
        patient_id: impl Into<String>,
    ) -> Result<Self, SpectraError> {
        if height == 0 || width == 0 {
            return Err(SpectraError::Validation(
                "mosaic dimensions must be positive".into(),
            ));
        }
        let expected = height * width * axis.len();
        if cube.len() != expected {
            return Err(SpectraError::Validation(format!(
                "cube has {} values, expected {height}x{width}x{} = {expected}",
                cube.len(),
                axis.len()
            )));
        }
        if mask.len() != height * width {
            return Err(SpectraError::Validation(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                height * width
            )));
        }
        if cube.iter().any(|v| !v.is_finite()) {
            return Err(SpectraError::Validation(
                "cube contains non-finite values".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            axis,
            cube,
            mask,
            sample_id: sample_id.into(),
            patient_id: patient_id.into(),
        })
    }

    /// All-zero cube with every pixel live.
    pub fn zeros(height: usize, width: usize, axis: WavenumberAxis) -> Result<Self, SpectraError> {
        let n = height * width;
        Self::new(
            height,
            width,
            axis,
            vec![0.0; n * axis.len()],
            vec![true; n],
            "",
            "",
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.axis.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn axis(&self) -> &WavenumberAxis {
        &self.axis
    }

    pub fn cube(&self) -> &[f32] {
        &self.cube
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn live_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn pixel(&self, index: usize) -> &[f32] {
        let c = self.channels();
        &self.cube[index * c..(index + 1) * c]
    }

    pub fn pixel_mut(&mut self, index: usize) -> &mut [f32] {
        let c = self.channels();
        &mut self.cube[index * c..(index + 1) * c]
    }

    pub fn pixel_f64(&self, index: usize) -> Vec<f64> {
        self.pixel(index).iter().map(|&v| v as f64).collect()
    }

    pub fn spectrum(&self, index: usize) -> Spectrum {
        Spectrum {
            axis: self.axis,
            values: self.pixel_f64(index),
        }
    }

    pub fn set_pixel(&mut self, index: usize, values: &[f64]) {
        for (dst, &src) in self.pixel_mut(index).iter_mut().zip(values) {
            *dst = src as f32;
        }
    }

    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<(), SpectraError> {
        if mask.len() != self.n_pixels() {
            return Err(SpectraError::Validation("mask size mismatch".into()));
        }
        self.mask = mask;
        Ok(())
    }

    /// Zeroes every pixel whose mask entry is false.
    pub fn zero_masked(&mut self) {
        let c = self.channels();
        for (i, &live) in self.mask.iter().enumerate() {
            if !live {
                self.cube[i * c..(i + 1) * c].fill(0.0);
            }
        }
    }

    /// Copy restricted to the channel index range (axis sliced accordingly).
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> Result<Self, SpectraError> {
        let axis = self.axis.slice(range.clone())?;
        let c = self.channels();
        let mut cube = Vec::with_capacity(self.n_pixels() * range.len());
        for p in 0..self.n_pixels() {
            cube.extend_from_slice(&self.cube[p * c + range.start..p * c + range.end]);
        }
        Ok(Self {
            height: self.height,
            width: self.width,
            axis,
            cube,
            mask: self.mask.clone(),
            sample_id: self.sample_id.clone(),
            patient_id: self.patient_id.clone(),
        })
    }

    /// Consumes the mosaic into its raw parts.
    pub fn into_parts(self) -> (Vec<f32>, Vec<bool>) {
        (self.cube, self.mask)
    }
}

/// 32×32×C labelled block cut from a mosaic.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub channels: usize,
    /// size × size × channels, channel-last.
    pub data: Vec<f32>,
    pub origin: (usize, usize),
    pub zero_count: usize,
    pub sample_id: String,
    pub patient_id: String,
}

impl Patch {
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.size + col) * self.channels;
        &self.data[start..start + self.channels]
    }
}

/// Interferent spectra and the global reference used to build EMSC models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLibrary {
    pub paraffin_spectra: Vec<Vec<f64>>,
    pub vapor_spectra: Vec<Vec<f64>>,
    pub global_mean: Spectrum,
}

impl ReferenceLibrary {
    pub fn new(
        paraffin_spectra: Vec<Vec<f64>>,
        vapor_spectra: Vec<Vec<f64>>,
        global_mean: Spectrum,
    ) -> Result<Self, SpectraError> {
        let c = global_mean.len();
        if paraffin_spectra.len() < 2 || vapor_spectra.len() < 2 {
            return Err(SpectraError::Validation(
                "reference library needs at least 2 paraffin and 2 vapor spectra".into(),
            ));
        }
        for row in paraffin_spectra.iter().chain(&vapor_spectra) {
            if row.len() != c {
                return Err(SpectraError::Validation(format!(
                    "library row has {} points, reference has {c}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(SpectraError::Validation(
                    "library contains non-finite values".into(),
                ));
            }
        }
        Ok(Self {
            paraffin_spectra,
            vapor_spectra,
            global_mean,
        })
    }

    pub fn axis(&self) -> &WavenumberAxis {
        &self.global_mean.axis
    }

    /// Restricts every row to the channel range of the reference axis.
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> Result<Self, SpectraError> {
        let axis = self.global_mean.axis.slice(range.clone())?;
        let cut = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r[range.clone()].to_vec()).collect()
        };
        Self::new(
            cut(&self.paraffin_spectra),
            cut(&self.vapor_spectra),
            Spectrum::new(axis, self.global_mean.values[range.clone()].to_vec())?,
        )
    }
}
