//! Extended multiplicative signal correction with paraffin and water-vapor
//! interferent subspaces.
//!
//! A spectrum is modelled as
//! `x ≈ a·1 + b·reference + Σ_j d_j·t^j + Σ_k c_k·interferent_k`
//! with `t` the wavenumber axis rescaled to [-1, 1]; the corrected spectrum
//! is `(x - a - Σ d_j t^j - Σ c_k interferent_k) / b`.

use nalgebra::DMatrix;
use serde::Serialize;

use super::pca::pca_decompose;
use super::PreprocessError;
use crate::spectra::{ReferenceLibrary, Spectrum, WavenumberAxis};

/// Smallest |b| accepted before a spectrum is declared uncorrectable.
pub const MIN_MULTIPLICATIVE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EmscModel {
    pub reference: Spectrum,
    /// Rows `t^j`, j = 0..=order.
    pub poly_basis: Vec<Vec<f64>>,
    pub interferent_basis: Vec<Vec<f64>>,
    pub interferent_names: Vec<String>,
    pub order: usize,
    /// Pseudo-inverse of the design matrix, P × C.
    solver: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmscCoefficients {
    pub a: f64,
    pub b: f64,
    /// d₁..d_order.
    pub baseline: Vec<f64>,
    pub interferents: Vec<f64>,
}

/// Axis rescaled linearly so the high end maps to 1 and the low end to -1.
pub fn rescaled_axis(axis: &WavenumberAxis) -> Vec<f64> {
    let (hi, lo) = (axis.start(), axis.end());
    axis.points()
        .iter()
        .map(|w| 2.0 * (w - lo) / (hi - lo) - 1.0)
        .collect()
}

/// Mean plus the leading PCs reaching `threshold` cumulative explained variance.
fn subspace(
    rows: &[Vec<f64>],
    threshold: f64,
    name: &str,
) -> Result<Vec<(String, Vec<f64>)>, PreprocessError> {
    let c = rows[0].len();
    let (model, _) = pca_decompose(rows, (rows.len() - 1).min(c))?;
    let mut out = vec![(format!("{name}_mean"), model.mean.clone())];
    if model.total_variance > 0.0 {
        let floor = model.total_variance * 1e-12;
        let mut cumulative = 0.0;
        for (i, (l, r)) in model
            .loadings
            .iter()
            .zip(&model.explained_variance_ratio)
            .enumerate()
        {
            if model.eigenvalues[i] <= floor {
                break;
            }
            out.push((format!("{name}_pc{}", i + 1), l.clone()));
            cumulative += r;
            if cumulative >= threshold {
                break;
            }
        }
    }
    Ok(out)
}

impl EmscModel {
    /// Builds the model from explicit basis rows; used by `build_emsc_model`.
    pub fn from_parts(
        reference: Spectrum,
        order: usize,
        interferents: Vec<(String, Vec<f64>)>,
    ) -> Result<Self, PreprocessError> {
        let c = reference.len();
        let t = rescaled_axis(&reference.axis);
        let poly_basis: Vec<Vec<f64>> = (0..=order)
            .map(|j| t.iter().map(|x| x.powi(j as i32)).collect())
            .collect();
        let (interferent_names, interferent_basis): (Vec<String>, Vec<Vec<f64>>) =
            interferents.into_iter().unzip();
        if interferent_basis.iter().any(|r| r.len() != c) {
            return Err(PreprocessError::Model(
                "interferent length differs from reference".into(),
            ));
        }

        let mut names = vec!["constant".to_string(), "reference".to_string()];
        names.extend((1..=order).map(|j| format!("poly{j}")));
        names.extend(interferent_names.iter().cloned());
        let mut rows: Vec<&[f64]> = vec![&poly_basis[0], &reference.values];
        rows.extend(poly_basis[1..].iter().map(Vec::as_slice));
        rows.extend(interferent_basis.iter().map(Vec::as_slice));
        check_rank(&rows, &names)?;

        let design = DMatrix::from_fn(c, rows.len(), |i, j| rows[j][i]);
        let solver = design
            .svd(true, true)
            .pseudo_inverse(1e-14)
            .map_err(|e| PreprocessError::Model(format!("pseudo-inverse failed: {e}")))?;
        Ok(Self {
            reference,
            poly_basis,
            interferent_basis,
            interferent_names,
            order,
            solver,
        })
    }

    pub fn n_terms(&self) -> usize {
        self.solver.nrows()
    }

    pub fn fit(&self, values: &[f64]) -> EmscCoefficients {
        let coef: Vec<f64> = self
            .solver
            .row_iter()
            .map(|r| r.iter().zip(values).map(|(a, b)| a * b).sum())
            .collect();
        EmscCoefficients {
            a: coef[0],
            b: coef[1],
            baseline: coef[2..2 + self.order].to_vec(),
            interferents: coef[2 + self.order..].to_vec(),
        }
    }

    pub fn correct_values(
        &self,
        values: &[f64],
    ) -> Result<(Vec<f64>, EmscCoefficients), PreprocessError> {
        if values.len() != self.reference.len() {
            return Err(PreprocessError::Input(format!(
                "spectrum has {} points, EMSC model expects {}",
                values.len(),
                self.reference.len()
            )));
        }
        let coef = self.fit(values);
        if coef.b.abs() < MIN_MULTIPLICATIVE || !coef.b.is_finite() {
            return Err(PreprocessError::Correction(format!(
                "multiplicative coefficient {:.3e} below {MIN_MULTIPLICATIVE:e}",
                coef.b
            )));
        }
        let mut out = values.to_vec();
        for (i, o) in out.iter_mut().enumerate() {
            let mut sub = coef.a * self.poly_basis[0][i];
            for (j, d) in coef.baseline.iter().enumerate() {
                sub += d * self.poly_basis[j + 1][i];
            }
            for (c, row) in coef.interferents.iter().zip(&self.interferent_basis) {
                sub += c * row[i];
            }
            *o = (*o - sub) / coef.b;
        }
        Ok((out, coef))
    }
}

fn check_rank(rows: &[&[f64]], names: &[String]) -> Result<(), PreprocessError> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (row, name) in rows.iter().zip(names) {
        let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = row.to_vec();
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            return Err(PreprocessError::Model(format!(
                "design matrix is rank deficient: row '{name}' is collinear with [{}]",
                names[..basis.len()].join(", ")
            )));
        }
        basis.push(v.iter().map(|x| x / norm).collect());
    }
    Ok(())
}

/// Reference = library global mean; interferents = paraffin mean and PCs,
/// then vapor mean and PCs, each truncated at `var_threshold`.
pub fn build_emsc_model(
    library: &ReferenceLibrary,
    axis: &WavenumberAxis,
    poly_order: usize,
    var_threshold: f64,
) -> Result<EmscModel, PreprocessError> {
    if !library.axis().matches(axis) {
        return Err(PreprocessError::Input(format!(
            "library axis {}..{} ({} pts) does not match {}..{} ({} pts)",
            library.axis().start(),
            library.axis().end(),
            library.axis().len(),
            axis.start(),
            axis.end(),
            axis.len()
        )));
    }
    let mut interferents = subspace(&library.paraffin_spectra, var_threshold, "paraffin")?;
    interferents.extend(subspace(&library.vapor_spectra, var_threshold, "vapor")?);
    EmscModel::from_parts(library.global_mean.clone(), poly_order, interferents)
}

pub fn emsc_correct(
    model: &EmscModel,
    spectrum: &Spectrum,
) -> Result<(Spectrum, EmscCoefficients), PreprocessError> {
    let (values, coef) = model.correct_values(&spectrum.values)?;
    Ok((
        Spectrum {
            axis: spectrum.axis,
            values,
        },
        coef,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis() -> WavenumberAxis {
        WavenumberAxis::new(1800.0, 900.0, 60).unwrap()
    }

    fn gauss(center: f64, width: f64) -> Vec<f64> {
        axis()
            .points()
            .iter()
            .map(|w| (-0.5 * ((w - center) / width).powi(2)).exp())
            .collect()
    }

    fn library(paraffin: Vec<Vec<f64>>) -> ReferenceLibrary {
        let reference: Vec<f64> = gauss(1655.0, 20.0)
            .iter()
            .zip(gauss(1240.0, 25.0))
            .map(|(a, b)| a + 0.4 * b)
            .collect();
        let v1 = gauss(1700.0, 3.0);
        let v2 = gauss(1550.0, 3.0);
        let vapor = (0..4)
            .map(|k| v1.iter().zip(&v2).map(|(a, b)| k as f64 * a - b).collect())
            .collect();
        ReferenceLibrary::new(paraffin, vapor, Spectrum::new(axis(), reference).unwrap()).unwrap()
    }

    #[test]
    fn identical_paraffin_contributes_mean_only() {
        let p = gauss(1465.0, 8.0);
        let lib = library(vec![p.clone(), p.clone(), p]);
        let model = build_emsc_model(&lib, &axis(), 4, 0.99).unwrap();
        let n_paraffin = model
            .interferent_names
            .iter()
            .filter(|n| n.starts_with("paraffin"))
            .count();
        assert_eq!(n_paraffin, 1);
    }

    #[test]
    fn constant_poly_row_is_ones() {
        let lib = library(vec![gauss(1465.0, 8.0), gauss(1375.0, 8.0)]);
        let model = build_emsc_model(&lib, &axis(), 4, 0.99).unwrap();
        assert!(model.poly_basis[0].iter().all(|&v| v == 1.0));
        assert_eq!(model.poly_basis.len(), 5);
    }

    #[test]
    fn collinear_rows_name_the_culprit() {
        let reference = Spectrum::new(axis(), gauss(1655.0, 20.0)).unwrap();
        let dup = reference.values.clone();
        let err = EmscModel::from_parts(reference, 4, vec![("dup".into(), dup)]).unwrap_err();
        assert!(err.to_string().contains("'dup'"), "{err}");
    }

    #[test]
    fn tiny_multiplicative_term_fails() {
        let lib = library(vec![gauss(1465.0, 8.0), gauss(1375.0, 8.0)]);
        let model = build_emsc_model(&lib, &axis(), 4, 0.99).unwrap();
        let flat = vec![0.3; 60];
        assert!(matches!(
            model.correct_values(&flat),
            Err(PreprocessError::Correction(_))
        ));
    }

    #[test]
    fn axis_mismatch_rejected() {
        let lib = library(vec![gauss(1465.0, 8.0), gauss(1375.0, 8.0)]);
        let other = WavenumberAxis::new(1800.0, 1000.0, 60).unwrap();
        assert!(build_emsc_model(&lib, &other, 4, 0.99).is_err());
    }
}
