//! Seeded synthetic micro-FTIR mosaics.
//!
//! Each mosaic is a tissue disc embedded in paraffin. Tissue pixels carry a
//! Gaussian-band biochemical spectrum whose amide-II and phosphate bands
//! scale with the sample class; paraffin pixels carry the CH₂ bending band
//! around 1465 cm⁻¹. Every pixel gets a multiplicative factor, a quadratic
//! baseline, a water-vapor mixture and white noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    truncation_range, HyperMosaic, ReferenceLibrary, SpectraError, Spectrum, WavenumberAxis,
};

/// A Gaussian absorption band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl Band {
    const fn new(center: f64, width: f64, amplitude: f64) -> Self {
        Self {
            center,
            width,
            amplitude,
        }
    }

    fn eval(&self, wavenumber: f64) -> f64 {
        let z = (wavenumber - self.center) / self.width;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

pub const AMIDE_I: f64 = 1655.0;
pub const AMIDE_II: f64 = 1545.0;
pub const PHOSPHATE: f64 = 1240.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    /// Points inside 1800–900 cm⁻¹; sets the grid spacing.
    pub fingerprint_channels: usize,
    /// Acquisition range (hi, lo) in cm⁻¹.
    pub raw_range: (f64, f64),
    pub n_samples: usize,
    pub n_classes: usize,
    pub tissue_fraction: f64,
    /// Class-independent tissue bands.
    pub tissue_bands: Vec<Band>,
    /// Per-class bands: `class_bands[k]` is added to every tissue pixel of class k.
    pub class_bands: Vec<Vec<Band>>,
    pub paraffin_center: f64,
    pub paraffin_amplitude: f64,
    /// Upper bound of the paraffin fraction left inside tissue pixels.
    pub paraffin_in_tissue: f64,
    pub vapor_amplitude: f64,
    pub baseline_amplitude: f64,
    pub noise_sigma: f64,
    pub n_library_paraffin: usize,
    pub n_library_vapor: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            fingerprint_channels: 467,
            raw_range: (3950.0, 900.0),
            n_samples: 12,
            n_classes: 3,
            tissue_fraction: 0.6,
            tissue_bands: vec![
                Band::new(1455.0, 12.0, 0.15),
                Band::new(1400.0, 14.0, 0.12),
                Band::new(1080.0, 18.0, 0.20),
                Band::new(2925.0, 20.0, 0.35),
                Band::new(3300.0, 60.0, 0.60),
            ],
            class_bands: Vec::new(),
            paraffin_center: 1465.0,
            paraffin_amplitude: 0.8,
            paraffin_in_tissue: 0.15,
            vapor_amplitude: 0.02,
            baseline_amplitude: 0.05,
            noise_sigma: 0.005,
            n_library_paraffin: 20,
            n_library_vapor: 20,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SpectraError> {
        let err = |msg: String| Err(SpectraError::Config(msg));
        if self.height == 0 || self.width == 0 {
            return err(format!(
                "mosaic size {}x{} must be positive",
                self.height, self.width
            ));
        }
        if self.fingerprint_channels < 2 {
            return err("fingerprint_channels must be at least 2".into());
        }
        if self.n_samples == 0 || self.n_classes == 0 {
            return err("n_samples and n_classes must be positive".into());
        }
        if !(self.tissue_fraction > 0.0 && self.tissue_fraction < 1.0) {
            return err(format!(
                "tissue_fraction {} must be in (0, 1)",
                self.tissue_fraction
            ));
        }
        if self.raw_range.0 < 1800.0 || self.raw_range.1 > 900.0 {
            return err("raw_range must cover 1800–900 cm⁻¹".into());
        }
        if !(1450.0..=1480.0).contains(&self.paraffin_center) {
            return err("paraffin_center must lie in 1480–1450 cm⁻¹".into());
        }
        if self.n_library_paraffin < 2 || self.n_library_vapor < 2 {
            return err("library sizes must be at least 2".into());
        }
        if !self.class_bands.is_empty() && self.class_bands.len() != self.n_classes {
            return err(format!(
                "class_bands has {} entries for {} classes",
                self.class_bands.len(),
                self.n_classes
            ));
        }
        Ok(())
    }

    pub fn axis(&self) -> Result<WavenumberAxis, SpectraError> {
        WavenumberAxis::aligned(
            1800.0,
            900.0,
            self.fingerprint_channels,
            self.raw_range.0,
            self.raw_range.1,
        )
    }

    /// Class bands, falling back to the default amide/phosphate ladder.
    pub fn bands_for_class(&self, class: usize) -> Vec<Band> {
        if let Some(bands) = self.class_bands.get(class) {
            return bands.clone();
        }
        let t = if self.n_classes > 1 {
            class as f64 / (self.n_classes - 1) as f64
        } else {
            0.0
        };
        vec![
            Band::new(AMIDE_I, 16.0, 1.0),
            Band::new(AMIDE_II, 16.0, 0.55 + 0.10 * t),
            Band::new(PHOSPHATE, 16.0, 0.10 + 0.50 * t),
        ]
    }

    /// Wavenumber where class amplitudes differ most.
    pub fn discriminative_wavenumber(&self) -> f64 {
        let first = self.bands_for_class(0);
        let last = self.bands_for_class(self.n_classes.saturating_sub(1));
        let mut best = (PHOSPHATE, f64::NEG_INFINITY);
        for a in &first {
            for b in &last {
                if a.center == b.center {
                    let diff = (a.amplitude - b.amplitude).abs();
                    if diff > best.1 {
                        best = (a.center, diff);
                    }
                }
            }
        }
        best.0
    }

    pub fn paraffin_bands(&self) -> Vec<Band> {
        vec![
            Band::new(self.paraffin_center, 9.0, 1.0),
            Band::new(1375.0, 7.0, 0.35),
            Band::new(1305.0, 10.0, 0.12),
            Band::new(2850.0, 12.0, 1.2),
            Band::new(2920.0, 14.0, 1.6),
        ]
    }
}

/// Ground truth planted in one mosaic.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTruth {
    pub tissue_mask: Vec<bool>,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub mosaics: Vec<HyperMosaic>,
    /// Library restricted to the 1800–900 cm⁻¹ fingerprint.
    pub library: ReferenceLibrary,
    pub truth: Vec<SampleTruth>,
}

fn render(bands: &[Band], axis: &[f64]) -> Vec<f64> {
    axis.iter()
        .map(|&w| bands.iter().map(|b| b.eval(w)).sum())
        .collect()
}

/// Two fixed water-vapor line patterns.
fn vapor_patterns(axis: &[f64], spacing: f64, seed: u64) -> [Vec<f64>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let width = spacing.max(3.0);
    let mut make = || {
        let lines: Vec<Band> = (0..30)
            .map(|_| {
                let center = if rng.gen_bool(0.8) {
                    rng.gen_range(1350.0..1900.0)
                } else {
                    rng.gen_range(3500.0..3900.0)
                };
                let amp = rng.gen_range(0.3..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                Band::new(center, width, amp)
            })
            .collect();
        render(&lines, axis)
    };
    [make(), make()]
}

/// Pixels inside the centered disc covering `fraction` of the mosaic.
pub fn disc_mask(height: usize, width: usize, fraction: f64) -> Vec<bool> {
    let radius2 = fraction * (height * width) as f64 / std::f64::consts::PI;
    let (cy, cx) = (height as f64 / 2.0, width as f64 / 2.0);
    let mut mask = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let dy = y as f64 + 0.5 - cy;
            let dx = x as f64 + 0.5 - cx;
            mask.push(dy * dy + dx * dx <= radius2);
        }
    }
    mask
}

struct Renderer<'a> {
    config: &'a SynthConfig,
    grid: Vec<f64>,
    scaled: Vec<f64>,
    paraffin: Vec<f64>,
    paraffin_shifted: Vec<f64>,
    vapor: [Vec<f64>; 2],
    tissue: Vec<Vec<f64>>,
}

impl Renderer<'_> {
    fn baseline(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let a = self.config.baseline_amplitude;
        [
            rng.gen_range(0.0..a),
            rng.gen_range(-a..a),
            rng.gen_range(-a..a),
        ]
    }

    fn add_common(&self, out: &mut [f64], rng: &mut ChaCha8Rng, noise: &Normal<f64>) {
        let [c0, c1, c2] = self.baseline(rng);
        let vapor = Normal::new(0.0, self.config.vapor_amplitude.max(1e-12)).unwrap();
        let (v1, v2) = (vapor.sample(rng), vapor.sample(rng));
        for (i, o) in out.iter_mut().enumerate() {
            let t = self.scaled[i];
            *o += c0 + c1 * t + c2 * t * t + v1 * self.vapor[0][i] + v2 * self.vapor[1][i];
            *o += noise.sample(rng);
        }
    }

    fn tissue_pixel(&self, class: usize, rng: &mut ChaCha8Rng, noise: &Normal<f64>) -> Vec<f64> {
        let scale = rng.gen_range(0.8..1.2);
        let residue = rng.gen_range(0.0..=self.config.paraffin_in_tissue);
        let mut out: Vec<f64> = self.tissue[class]
            .iter()
            .zip(&self.paraffin)
            .map(|(t, p)| scale * t + residue * p)
            .collect();
        self.add_common(&mut out, rng, noise);
        out
    }

    fn paraffin_pixel(&self, rng: &mut ChaCha8Rng, noise: &Normal<f64>) -> Vec<f64> {
        let amp = self.config.paraffin_amplitude * rng.gen_range(0.7..1.3);
        let shift = rng.gen_range(-0.2..0.2);
        let mut out: Vec<f64> = self
            .paraffin
            .iter()
            .zip(&self.paraffin_shifted)
            .map(|(p, s)| amp * (p + shift * (s - p)))
            .collect();
        self.add_common(&mut out, rng, noise);
        out
    }
}

/// Generates `n_samples` mosaics plus a matching reference library.
pub fn synth_dataset(config: &SynthConfig, seed: u64) -> Result<SynthDataset, SpectraError> {
    config.validate()?;
    let axis = config.axis()?;
    let grid = axis.points();
    let (hi, lo) = (axis.start(), axis.end());
    let scaled: Vec<f64> = grid
        .iter()
        .map(|w| 2.0 * (w - lo) / (hi - lo) - 1.0)
        .collect();

    let paraffin_bands = config.paraffin_bands();
    let mut shifted_bands = paraffin_bands.clone();
    for band in &mut shifted_bands {
        band.center += 3.0;
    }
    let tissue = (0..config.n_classes)
        .map(|k| {
            let mut bands = config.tissue_bands.clone();
            bands.extend(config.bands_for_class(k));
            render(&bands, &grid)
        })
        .collect();
    let renderer = Renderer {
        config,
        paraffin: render(&paraffin_bands, &grid),
        paraffin_shifted: render(&shifted_bands, &grid),
        vapor: vapor_patterns(&grid, axis.spacing(), seed),
        scaled,
        grid,
        tissue,
    };
    let noise = Normal::new(0.0, config.noise_sigma.max(0.0)).unwrap();
    let plant = disc_mask(config.height, config.width, config.tissue_fraction);
    let n_pixels = config.height * config.width;
    let channels = axis.len();

    let mut mosaics = Vec::with_capacity(config.n_samples);
    let mut truth = Vec::with_capacity(config.n_samples);
    for sample in 0..config.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sample as u64);
        let class = sample % config.n_classes;
        let mut cube = Vec::with_capacity(n_pixels * channels);
        for &is_tissue in &plant {
            let pixel = if is_tissue {
                renderer.tissue_pixel(class, &mut rng, &noise)
            } else {
                renderer.paraffin_pixel(&mut rng, &noise)
            };
            cube.extend(pixel.iter().map(|&v| v as f32));
        }
        mosaics.push(HyperMosaic::new(
            config.height,
            config.width,
            axis,
            cube,
            vec![true; n_pixels],
            format!("S{sample:03}"),
            format!("P{sample:03}"),
        )?);
        truth.push(SampleTruth {
            tissue_mask: plant.clone(),
            class_index: class,
        });
    }

    let library = build_library(config, &renderer, &mosaics, &plant, seed, &noise)?;
    Ok(SynthDataset {
        mosaics,
        library,
        truth,
    })
}

fn build_library(
    config: &SynthConfig,
    renderer: &Renderer<'_>,
    mosaics: &[HyperMosaic],
    plant: &[bool],
    seed: u64,
    noise: &Normal<f64>,
) -> Result<ReferenceLibrary, SpectraError> {
    let axis = mosaics[0].axis();
    let range = truncation_range(axis, 1800.0, 900.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - 1);

    // Paraffin block: pure wax with amplitude and small band-shift variation.
    let paraffin = (0..config.n_library_paraffin)
        .map(|_| {
            let amp = rng.gen_range(0.5..1.5);
            let shift = rng.gen_range(-0.3..0.3);
            renderer
                .paraffin
                .iter()
                .zip(&renderer.paraffin_shifted)
                .map(|(p, s)| amp * (p + shift * (s - p)) + 0.1 * noise.sample(&mut rng))
                .collect::<Vec<f64>>()[range.clone()]
            .to_vec()
        })
        .collect();

    // Clean slide with the purge off: vapor lines only.
    let vapor_scale = Normal::new(0.0, 1.0).unwrap();
    let vapor = (0..config.n_library_vapor)
        .map(|_| {
            let (v1, v2) = (vapor_scale.sample(&mut rng), vapor_scale.sample(&mut rng));
            (0..renderer.grid.len())
                .map(|i| v1 * renderer.vapor[0][i] + v2 * renderer.vapor[1][i])
                .map(|v| v * config.vapor_amplitude + 0.1 * noise.sample(&mut rng))
                .collect::<Vec<f64>>()[range.clone()]
            .to_vec()
        })
        .collect();

    let mut mean = vec![0.0; range.len()];
    let mut count = 0usize;
    for mosaic in mosaics {
        for (p, _) in plant.iter().enumerate().filter(|(_, &t)| t) {
            for (m, &v) in mean.iter_mut().zip(&mosaic.pixel(p)[range.clone()]) {
                *m += v as f64;
            }
            count += 1;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    ReferenceLibrary::new(paraffin, vapor, Spectrum::new(axis.slice(range)?, mean)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::io::encode_cube;

    fn small() -> SynthConfig {
        SynthConfig {
            fingerprint_channels: 64,
            raw_range: (1950.0, 850.0),
            n_samples: 3,
            tissue_fraction: 0.5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_dataset(&small(), 3).unwrap();
        let b = synth_dataset(&small(), 3).unwrap();
        for (x, y) in a.mosaics.iter().zip(&b.mosaics) {
            assert_eq!(encode_cube(x).unwrap(), encode_cube(y).unwrap());
        }
        assert_eq!(a.library, b.library);
        let c = synth_dataset(&small(), 4).unwrap();
        assert_ne!(a.mosaics[0], c.mosaics[0]);
    }

    #[test]
    fn disc_covers_requested_fraction() {
        let mask = disc_mask(64, 64, 0.5);
        let count = mask.iter().filter(|&&m| m).count() as f64;
        assert!((count - 2048.0).abs() / 4096.0 <= 0.05, "count {count}");
    }

    #[test]
    fn paraffin_dominates_its_window() {
        let data = synth_dataset(&small(), 1).unwrap();
        let m = &data.mosaics[0];
        let range = m.axis().index_range(1480.0, 1450.0).unwrap();
        let (mut par, mut tis) = ((0.0, 0usize), (0.0, 0usize));
        for (p, &t) in data.truth[0].tissue_mask.iter().enumerate() {
            let mean: f64 = m.pixel(p)[range.clone()]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>()
                / range.len() as f64;
            let acc = if t { &mut tis } else { &mut par };
            acc.0 += mean;
            acc.1 += 1;
        }
        assert!(par.0 / par.1 as f64 > tis.0 / tis.1 as f64);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let cfg = SynthConfig {
            height: 0,
            ..small()
        };
        assert!(matches!(
            synth_dataset(&cfg, 0),
            Err(SpectraError::Config(_))
        ));
    }

    #[test]
    fn library_lives_on_fingerprint_axis() {
        let data = synth_dataset(&small(), 2).unwrap();
        assert_eq!(data.library.axis().len(), 64);
        assert_eq!(data.library.paraffin_spectra[0].len(), 64);
    }
}
