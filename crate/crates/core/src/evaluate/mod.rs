//! Dataset splits, patch metrics, per-sample voting and report tables.

mod metrics;
mod report;
mod split;

pub use metrics::{
    classification_metrics, regression_metrics, regression_report, ClassMetrics,
    ClassificationReport, ConfusionTally, RegressionMetrics, RegressionReport,
};
pub use report::{make_report, mean_std, voted_accuracy, FoldResult, ReportInput, VoteRecord};
pub use split::{
    holdout_per_class, split_dataset, write_folds_csv, Fold, SplitMode, SplitPlan, SplitUnit,
};

use serde::Serialize;

use crate::labels::{decode_output, Decoded, EncodingKind, LabelError, TaskSchema};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("split error: {0}")]
    Split(String),
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vote {
    pub prediction: Decoded,
    /// Patches decoded to each class (empty for regression).
    pub counts: Vec<usize>,
    pub patches: usize,
}

/// Score of `class` in one post-activation output. Ordinal levels use the
/// cumulative difference `p(≥c) − p(≥c+1)`.
fn class_score(schema: &TaskSchema, raw: &[f64], class: usize) -> f64 {
    match schema.kind {
        EncodingKind::Binary if class == 1 => raw[0],
        EncodingKind::Binary => 1.0 - raw[0],
        EncodingKind::OneHot => raw[class],
        EncodingKind::Ordinal => raw[class] - raw.get(class + 1).copied().unwrap_or(0.0),
        EncodingKind::Regression => f64::NAN,
    }
}

/// Majority class over decoded patches. Ties go to the class whose patches
/// decoded with the larger mean score for that class, then the lower index.
/// Regression averages raw outputs, then unscales.
pub fn vote_sample(outputs: &[Vec<f64>], schema: &TaskSchema) -> Result<Vote, EvalError> {
    if outputs.is_empty() {
        return Err(EvalError::Input("no patch outputs to vote on".into()));
    }
    if schema.kind == EncodingKind::Regression {
        // Validates every output before averaging.
        for o in outputs {
            decode_output(schema, o)?;
        }
        let mean = outputs.iter().map(|o| o[0]).sum::<f64>() / outputs.len() as f64;
        return Ok(Vote {
            prediction: Decoded::Percent(schema.unscale(mean)?),
            counts: Vec::new(),
            patches: outputs.len(),
        });
    }
    let k = schema.n_classes();
    let mut counts = vec![0usize; k];
    let mut score_sums = vec![0.0; k];
    for o in outputs {
        if let Some(c) = decode_output(schema, o)?.class_index() {
            counts[c] += 1;
            score_sums[c] += class_score(schema, o, c);
        }
    }
    let mean = |c: usize| score_sums[c] / counts[c] as f64;
    let mut winner = 0;
    for c in 1..k {
        if counts[c] > counts[winner]
            || (counts[c] == counts[winner] && counts[c] > 0 && mean(c) > mean(winner))
        {
            winner = c;
        }
    }
    Ok(Vote {
        prediction: Decoded::Class {
            index: winner,
            name: schema.classes[winner].clone(),
        },
        counts,
        patches: outputs.len(),
    })
}
