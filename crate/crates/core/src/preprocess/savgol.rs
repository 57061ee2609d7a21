//! Savitzky–Golay smoothing.
//!
//! Interior points use the symmetric least-squares kernel. Within half a
//! window of either end the polynomial is fitted over the first (last)
//! `window` samples and evaluated at the edge point, so polynomials up to
//! the filter order are reproduced exactly everywhere.

use nalgebra::{DMatrix, DVector};

use super::PreprocessError;
use crate::spectra::Spectrum;

/// Least-squares weights `h` such that `Σ h_j y_j` is the value at `at` of
/// the degree-`order` polynomial fitted to the points `(positions_j, y_j)`.
pub fn fit_weights(positions: &[f64], at: f64, order: usize) -> Vec<f64> {
    let p = order + 1;
    let v = DMatrix::from_fn(positions.len(), p, |i, k| positions[i].powi(k as i32));
    let gram = v.tr_mul(&v);
    let gram_inv = gram
        .try_inverse()
        .expect("Vandermonde Gram matrix is invertible for distinct positions");
    let e = DVector::from_fn(p, |k, _| at.powi(k as i32));
    let w = &v * (gram_inv * e);
    w.iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavGol {
    window: usize,
    central: Vec<f64>,
    /// `left[i]` smooths point `i` from the first `window` samples.
    left: Vec<Vec<f64>>,
    /// `right[i]` smooths point `n - half + i` from the last `window` samples.
    right: Vec<Vec<f64>>,
}

impl SavGol {
    pub fn new(window: usize, order: usize) -> Result<Self, PreprocessError> {
        if window.is_multiple_of(2) || window <= order {
            return Err(PreprocessError::Input(format!(
                "Savitzky-Golay needs an odd window larger than the order (window {window}, order {order})"
            )));
        }
        let half = window / 2;
        let positions: Vec<f64> = (0..window).map(|j| j as f64 - half as f64).collect();
        let central = fit_weights(&positions, 0.0, order);
        let left = (0..half)
            .map(|i| fit_weights(&positions, i as f64 - half as f64, order))
            .collect();
        let right = (0..half)
            .map(|i| fit_weights(&positions, (i + 1) as f64, order))
            .collect();
        Ok(Self {
            window,
            central,
            left,
            right,
        })
    }

    pub fn central_kernel(&self) -> &[f64] {
        &self.central
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        let n = values.len();
        if n < self.window {
            return Err(PreprocessError::Input(format!(
                "spectrum of {n} points is shorter than the smoothing window {}",
                self.window
            )));
        }
        let half = self.window / 2;
        let dot = |w: &[f64], x: &[f64]| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut out = vec![0.0; n];
        for (i, w) in self.left.iter().enumerate() {
            out[i] = dot(w, &values[..self.window]);
        }
        for i in half..n - half {
            out[i] = dot(&self.central, &values[i - half..=i + half]);
        }
        for (i, w) in self.right.iter().enumerate() {
            out[n - half + i] = dot(w, &values[n - self.window..]);
        }
        Ok(out)
    }
}

pub fn savgol_smooth(
    spectrum: &Spectrum,
    window: usize,
    order: usize,
) -> Result<Spectrum, PreprocessError> {
    let values = SavGol::new(window, order)?.apply(&spectrum.values)?;
    Ok(Spectrum {
        axis: spectrum.axis,
        values,
    })
}
