//! Report tables: fold-aggregated patch metrics, the per-patient vote grid
//! and regression errors on both scales.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{ClassMetrics, ClassificationReport, EvalError, RegressionMetrics, RegressionReport};

/// Mean and sample standard deviation over the non-NaN values, with the
/// number of values used. A single value has std 0; none gives NaN.
pub fn mean_std(values: &[f64]) -> (f64, f64, usize) {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 1);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt(), n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub classification: Option<ClassificationReport>,
    pub regression: Option<RegressionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteRecord {
    pub patient: String,
    pub sample: String,
    pub fold: usize,
    pub truth: String,
    pub prediction: String,
    /// None for regression.
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportInput {
    pub task: String,
    pub classes: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub votes: Vec<VoteRecord>,
}

/// Fraction of classification votes that are correct, NaN if there are none.
pub fn voted_accuracy(votes: &[VoteRecord]) -> f64 {
    let flags: Vec<bool> = votes.iter().filter_map(|v| v.correct).collect();
    if flags.is_empty() {
        return f64::NAN;
    }
    flags.iter().filter(|&&c| c).count() as f64 / flags.len() as f64
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.6}")
    }
}

/// Writes `metrics.csv`, `votes.csv` and, for regression folds,
/// `regression.csv` into `dir`. Returns the written paths.
pub fn make_report(dir: &Path, input: &ReportInput) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let cls: Vec<&ClassificationReport> = input
        .folds
        .iter()
        .filter_map(|f| f.classification.as_ref())
        .collect();
    if !cls.is_empty() {
        let path = dir.join("metrics.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "task",
            "class",
            "accuracy_mean",
            "accuracy_std",
            "specificity_mean",
            "specificity_std",
            "sensitivity_mean",
            "sensitivity_std",
            "undefined_folds",
        ])?;
        for (c, class) in input.classes.iter().enumerate() {
            let mut row = vec![input.task.clone(), class.clone()];
            let mut undefined = 0;
            let getters: [fn(&ClassMetrics) -> f64; 3] =
                [|m| m.accuracy, |m| m.specificity, |m| m.sensitivity];
            for get in getters {
                let vals: Vec<f64> = cls.iter().map(|r| get(&r.per_class[c])).collect();
                let (mean, std, n) = mean_std(&vals);
                undefined = undefined.max(vals.len() - n);
                row.push(num(mean));
                row.push(num(std));
            }
            row.push(undefined.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        written.push(path);
    }

    let path = dir.join("votes.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "patient",
        "sample",
        "fold",
        "truth",
        "prediction",
        "correct",
    ])?;
    for v in &input.votes {
        let correct = v.correct.map_or(String::new(), |c| c.to_string());
        w.write_record([
            &v.patient,
            &v.sample,
            &v.fold.to_string(),
            &v.truth,
            &v.prediction,
            &correct,
        ])?;
    }
    w.flush()?;
    written.push(path);

    let reg: Vec<&RegressionReport> = input
        .folds
        .iter()
        .filter_map(|f| f.regression.as_ref())
        .collect();
    if !reg.is_empty() {
        let path = dir.join("regression.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["scale", "fold", "mae", "mse", "rmse"])?;
        for (scale, pick) in [
            (
                "fraction",
                (|r: &RegressionReport| r.fraction) as fn(&RegressionReport) -> RegressionMetrics,
            ),
            ("percent", |r| r.percent),
        ] {
            let rows: Vec<RegressionMetrics> = reg.iter().map(|r| pick(r)).collect();
            for (f, m) in rows.iter().enumerate() {
                w.write_record([
                    scale,
                    &f.to_string(),
                    &num(m.mae),
                    &num(m.mse),
                    &num(m.rmse),
                ])?;
            }
            let stats = |g: fn(&RegressionMetrics) -> f64| {
                mean_std(&rows.iter().map(g).collect::<Vec<_>>())
            };
            let (mae, mse, rmse) = (stats(|m| m.mae), stats(|m| m.mse), stats(|m| m.rmse));
            w.write_record([scale, "mean", &num(mae.0), &num(mse.0), &num(rmse.0)])?;
            w.write_record([scale, "std", &num(mae.1), &num(mse.1), &num(rmse.1)])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
