//! Held-out test selection and stratified k-fold assignment.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::labels::{EncodingKind, Label, TaskSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Train and dev never share a patient.
    ByPatient,
    /// Units are dealt to folds independently; a patient may span train and dev.
    ByPatch,
}

/// One item to split: a sample in by-patient mode, usually a patch in by-patch mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitUnit {
    pub id: String,
    pub patient_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
}

/// Indices refer to the unit slice given to [`split_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub stratify_by: String,
    pub test_patients: Vec<String>,
    pub test: Vec<usize>,
    pub folds: Vec<Fold>,
}

/// Patients held out per class: two for binary schemas, one otherwise.
pub fn holdout_per_class(schema: &TaskSchema) -> usize {
    if schema.kind == EncodingKind::Binary {
        2
    } else {
        1
    }
}

/// Majority stratum among a patient's units, ties to the lower index.
fn patient_stratum(strata: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &s in strata {
        counts[s] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

pub fn split_dataset(
    units: &[SplitUnit],
    schema: &TaskSchema,
    mode: SplitMode,
    n_folds: usize,
    seed: u64,
) -> Result<SplitPlan, EvalError> {
    if n_folds < 2 {
        return Err(EvalError::Split(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    let k = schema.n_classes();
    let strata: Vec<usize> = units
        .iter()
        .map(|u| schema.stratum(&u.label))
        .collect::<Result<_, _>>()?;

    let mut patients: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, u) in units.iter().enumerate() {
        patients.entry(&u.patient_id).or_default().push(i);
    }
    let mut by_class: Vec<Vec<&str>> = vec![Vec::new(); k];
    for (p, idx) in &patients {
        let s: Vec<usize> = idx.iter().map(|&i| strata[i]).collect();
        by_class[patient_stratum(&s, k)].push(p);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_class = holdout_per_class(schema);
    let mut test_patients = Vec::new();
    for (c, list) in by_class.iter_mut().enumerate() {
        // Regression strata are only a stratification device; an empty one
        // has nothing to hold out.
        if list.is_empty() && schema.kind == EncodingKind::Regression {
            continue;
        }
        if list.len() < per_class {
            return Err(EvalError::Split(format!(
                "class '{}' has {} patient(s), {} needed for the test set",
                schema.classes[c],
                list.len(),
                per_class
            )));
        }
        list.shuffle(&mut rng);
        test_patients.extend(list.drain(..per_class).map(str::to_string));
    }
    let mut test: Vec<usize> = test_patients
        .iter()
        .flat_map(|p| patients[p.as_str()].iter().copied())
        .collect();
    test.sort_unstable();

    // Round-robin dealing per class, continuing the fold counter across
    // classes, keeps every fold within one unit of proportional.
    let mut assign = vec![usize::MAX; units.len()];
    let mut next = 0;
    match mode {
        SplitMode::ByPatient => {
            for list in &by_class {
                for p in list {
                    for &i in &patients[p] {
                        assign[i] = next % n_folds;
                    }
                    next += 1;
                }
            }
        }
        SplitMode::ByPatch => {
            let mut pools: Vec<Vec<usize>> = vec![Vec::new(); k];
            for list in &by_class {
                for p in list {
                    for &i in &patients[p] {
                        pools[strata[i]].push(i);
                    }
                }
            }
            for pool in &mut pools {
                pool.sort_unstable();
                pool.shuffle(&mut rng);
                for &i in pool.iter() {
                    assign[i] = next % n_folds;
                    next += 1;
                }
            }
        }
    }
    if next < n_folds {
        return Err(EvalError::Split(format!(
            "{next} units left after the test hold-out, {n_folds} folds requested"
        )));
    }
    let folds = (0..n_folds)
        .map(|f| {
            let (mut train, mut dev) = (Vec::new(), Vec::new());
            for (i, &a) in assign.iter().enumerate() {
                if a == f {
                    dev.push(i);
                } else if a != usize::MAX {
                    train.push(i);
                }
            }
            Fold { train, dev }
        })
        .collect();
    Ok(SplitPlan {
        mode,
        stratify_by: schema.name.clone(),
        test_patients,
        test,
        folds,
    })
}

/// `id,patient_id,fold,role` rows; test units carry an empty fold.
pub fn write_folds_csv(
    path: &Path,
    plan: &SplitPlan,
    units: &[SplitUnit],
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "patient_id", "fold", "role"])?;
    for &i in &plan.test {
        w.write_record([units[i].id.as_str(), &units[i].patient_id, "", "test"])?;
    }
    for (f, fold) in plan.folds.iter().enumerate() {
        for (role, idx) in [("train", &fold.train), ("dev", &fold.dev)] {
            for &i in idx {
                w.write_record([
                    units[i].id.as_str(),
                    &units[i].patient_id,
                    &f.to_string(),
                    role,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
