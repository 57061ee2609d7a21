//! Task schemas, target encodings, decode rules and class weights.

mod manifest;

pub use manifest::{read_manifest, write_manifest, LabelRecord, ManifestLoad};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("manifest error: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Type,
    Subtype,
    Er,
    Pr,
    Her2,
    Ki67,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Type,
        Task::Subtype,
        Task::Er,
        Task::Pr,
        Task::Her2,
        Task::Ki67,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Type => "type",
            Task::Subtype => "subtype",
            Task::Er => "er",
            Task::Pr => "pr",
            Task::Her2 => "her2",
            Task::Ki67 => "ki67",
        }
    }

    pub fn parse(s: &str) -> Result<Task, LabelError> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| LabelError::Schema(format!("unknown task '{s}'")))
    }

    /// Whether folds keep each patient on one side of the train/dev split.
    pub fn splits_by_patient(self) -> bool {
        matches!(self, Task::Type | Task::Subtype | Task::Her2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingKind {
    Binary,
    OneHot,
    Ordinal,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSchema {
    pub name: String,
    pub kind: EncodingKind,
    /// Ordered class names. For binary schemas index 1 is the positive class.
    /// Regression schemas list their nominal levels (used only for stratification).
    pub classes: Vec<String>,
    pub output_dim: usize,
    pub threshold: f64,
    pub regression_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class(String),
    Percent(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Decoded {
    Class { index: usize, name: String },
    Percent(f64),
}

impl Decoded {
    pub fn class_index(&self) -> Option<usize> {
        match self {
            Decoded::Class { index, .. } => Some(*index),
            Decoded::Percent(_) => None,
        }
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl TaskSchema {
    pub fn for_task(task: Task) -> TaskSchema {
        let levels = ["-", "+", "++", "+++"];
        let (kind, classes, range) = match task {
            Task::Type => (EncodingKind::Binary, names(&["AT", "CA"]), None),
            Task::Subtype => (
                EncodingKind::OneHot,
                names(&["LA", "LB", "HER2", "TNBC"]),
                None,
            ),
            Task::Er | Task::Pr => (EncodingKind::Ordinal, names(&levels), None),
            Task::Her2 => (EncodingKind::Binary, names(&["0", "3+"]), None),
            Task::Ki67 => (
                EncodingKind::Regression,
                names(&["5", "10", "20", "30"]),
                Some((5.0, 30.0)),
            ),
        };
        let output_dim = match kind {
            EncodingKind::Binary | EncodingKind::Regression => 1,
            _ => classes.len(),
        };
        TaskSchema {
            name: task.name().into(),
            kind,
            classes,
            output_dim,
            threshold: 0.5,
            regression_range: range,
        }
    }

    /// A one-hot schema over arbitrary class names.
    pub fn onehot(name: &str, classes: &[&str]) -> Result<TaskSchema, LabelError> {
        if classes.len() < 2 {
            return Err(LabelError::Schema(
                "one-hot schema needs at least 2 classes".into(),
            ));
        }
        Ok(TaskSchema {
            name: name.into(),
            kind: EncodingKind::OneHot,
            classes: names(classes),
            output_dim: classes.len(),
            threshold: 0.5,
            regression_range: None,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Result<usize, LabelError> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| LabelError::Schema(format!("'{name}' is not a class of {}", self.name)))
    }

    /// Nominal class of a label: the class itself, or the nearest listed
    /// level for regression percentages.
    pub fn stratum(&self, label: &Label) -> Result<usize, LabelError> {
        match label {
            Label::Class(name) => self.class_index(name),
            Label::Percent(p) => {
                let levels: Vec<f64> = self.classes.iter().filter_map(|c| c.parse().ok()).collect();
                if levels.is_empty() {
                    return Err(LabelError::Schema(format!(
                        "{} has no numeric levels",
                        self.name
                    )));
                }
                let mut best = 0;
                for (i, l) in levels.iter().enumerate() {
                    if (l - p).abs() < (levels[best] - p).abs() {
                        best = i;
                    }
                }
                Ok(best)
            }
        }
    }

    /// The one-hot schema over the listed classes only, in their original order.
    pub fn restrict(&self, keep: &[usize]) -> Result<TaskSchema, LabelError> {
        if self.kind != EncodingKind::OneHot {
            return Err(LabelError::Schema(format!(
                "only one-hot schemas can drop classes, {} is {:?}",
                self.name, self.kind
            )));
        }
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if let Some(&bad) = keep.iter().find(|&&i| i >= self.classes.len()) {
            return Err(LabelError::Schema(format!(
                "class index {bad} outside {}",
                self.name
            )));
        }
        let names: Vec<&str> = keep.iter().map(|&i| self.classes[i].as_str()).collect();
        TaskSchema::onehot(&self.name, &names)
    }

    pub fn scale(&self, percent: f64) -> Result<f64, LabelError> {
        let (lo, hi) = self.range()?;
        if !(lo..=hi).contains(&percent) {
            return Err(LabelError::Range(format!(
                "{percent}% outside [{lo}, {hi}] for {}",
                self.name
            )));
        }
        Ok((percent - lo) / (hi - lo))
    }

    pub fn unscale(&self, fraction: f64) -> Result<f64, LabelError> {
        let (lo, hi) = self.range()?;
        Ok(fraction * (hi - lo) + lo)
    }

    fn range(&self) -> Result<(f64, f64), LabelError> {
        self.regression_range
            .ok_or_else(|| LabelError::Schema(format!("{} is not a regression schema", self.name)))
    }
}

pub fn encode_label(schema: &TaskSchema, label: &Label) -> Result<Vec<f64>, LabelError> {
    match (schema.kind, label) {
        (EncodingKind::Regression, Label::Percent(p)) => Ok(vec![schema.scale(*p)?]),
        (EncodingKind::Regression, Label::Class(_)) | (_, Label::Percent(_)) => {
            Err(LabelError::Schema(format!(
                "label {label:?} does not fit {:?} schema {}",
                schema.kind, schema.name
            )))
        }
        (kind, Label::Class(name)) => {
            let i = schema.class_index(name)?;
            Ok(match kind {
                EncodingKind::Binary => vec![i as f64],
                EncodingKind::OneHot => (0..schema.output_dim)
                    .map(|j| (j == i) as u8 as f64)
                    .collect(),
                _ => (0..schema.output_dim)
                    .map(|j| (j <= i) as u8 as f64)
                    .collect(),
            })
        }
    }
}

/// Decodes post-activation outputs (sigmoid/softmax probabilities, or the
/// linear regression output).
pub fn decode_output(schema: &TaskSchema, raw: &[f64]) -> Result<Decoded, LabelError> {
    if raw.len() != schema.output_dim {
        return Err(LabelError::Decode(format!(
            "{} expects {} outputs, got {}",
            schema.name,
            schema.output_dim,
            raw.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(LabelError::Decode(format!("non-finite output {raw:?}")));
    }
    let class = |index: usize| Decoded::Class {
        index,
        name: schema.classes[index].clone(),
    };
    Ok(match schema.kind {
        EncodingKind::Binary => class((raw[0] >= schema.threshold) as usize),
        EncodingKind::OneHot => {
            let mut best = 0;
            for (i, v) in raw.iter().enumerate() {
                if *v > raw[best] {
                    best = i;
                }
            }
            class(best)
        }
        EncodingKind::Ordinal => {
            class(raw.iter().rposition(|&v| v > schema.threshold).unwrap_or(0))
        }
        EncodingKind::Regression => Decoded::Percent(schema.unscale(raw[0])?),
    })
}

/// Balanced inverse-frequency weights `N / (K·n_c)`.
pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>, LabelError> {
    if counts.is_empty() {
        return Err(LabelError::Input("no classes".into()));
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(LabelError::Input(format!("class {c} has zero samples")));
    }
    let n: usize = counts.iter().sum();
    let k = counts.len();
    Ok(counts.iter().map(|&c| n as f64 / (k * c) as f64).collect())
}
