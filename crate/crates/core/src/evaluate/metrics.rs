//! One-vs-rest classification metrics and regression errors.

use serde::Serialize;

use super::EvalError;
use crate::labels::TaskSchema;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionTally {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionTally {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// TP/(TP+FN), NaN when the class never occurs.
    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// TN/(TN+FP), NaN when every truth is this class.
    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub tally: ConfusionTally,
    pub accuracy: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    /// Names of metrics whose denominator was zero (reported as NaN).
    pub undefined: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub overall_accuracy: f64,
    pub n: usize,
}

pub fn classification_metrics(
    preds: &[usize],
    truths: &[usize],
    classes: &[String],
) -> Result<ClassificationReport, EvalError> {
    if preds.len() != truths.len() {
        return Err(EvalError::Input(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if let Some(&bad) = preds.iter().chain(truths).find(|&&c| c >= classes.len()) {
        return Err(EvalError::Input(format!(
            "class index {bad} outside {} classes",
            classes.len()
        )));
    }
    let per_class = classes
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let mut t = ConfusionTally::default();
            for (&p, &y) in preds.iter().zip(truths) {
                match (p == c, y == c) {
                    (true, true) => t.tp += 1,
                    (true, false) => t.fp += 1,
                    (false, true) => t.fn_ += 1,
                    (false, false) => t.tn += 1,
                }
            }
            let (accuracy, specificity, sensitivity) =
                (t.accuracy(), t.specificity(), t.sensitivity());
            let undefined = [
                ("accuracy", accuracy),
                ("specificity", specificity),
                ("sensitivity", sensitivity),
            ]
            .into_iter()
            .filter(|(_, v)| v.is_nan())
            .map(|(n, _)| n)
            .collect();
            ClassMetrics {
                class: name.clone(),
                tally: t,
                accuracy,
                specificity,
                sensitivity,
                undefined,
            }
        })
        .collect();
    let correct = preds.iter().zip(truths).filter(|(p, y)| p == y).count();
    Ok(ClassificationReport {
        per_class,
        overall_accuracy: ratio(correct, preds.len()),
        n: preds.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
}

pub fn regression_metrics(preds: &[f64], truths: &[f64]) -> Result<RegressionMetrics, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Input("no regression predictions".into()));
    }
    if preds.len() != truths.len() {
        return Err(EvalError::Input(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let n = preds.len() as f64;
    let mae = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n;
    let mse = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    Ok(RegressionMetrics {
        mae,
        mse,
        rmse: mse.sqrt(),
    })
}

/// Errors on the min–max fraction scale and rescaled to percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionReport {
    pub fraction: RegressionMetrics,
    pub percent: RegressionMetrics,
}

/// Percent-scale errors are the fraction-scale errors times the range span
/// (squared for MSE), since unscaling is affine.
pub fn regression_report(
    preds: &[f64],
    truths: &[f64],
    schema: &TaskSchema,
) -> Result<RegressionReport, EvalError> {
    let fraction = regression_metrics(preds, truths)?;
    let (lo, hi) = schema
        .regression_range
        .ok_or_else(|| EvalError::Input(format!("{} is not a regression schema", schema.name)))?;
    let span = hi - lo;
    let percent = RegressionMetrics {
        mae: fraction.mae * span,
        mse: fraction.mse * span * span,
        rmse: fraction.rmse * span,
    };
    Ok(RegressionReport { fraction, percent })
}
