//! Minibatch training with per-epoch shuffling and augmentation, cosine
//! restarts stepped per batch, and best-on-dev checkpointing.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{apply_d4, D4};
use super::CarenetError;
use crate::autonn::{
    adam_step, compute_loss, loss_and_grad, lr_at_step, network_eval, Grads, NetworkGraph,
    OptimizerState, ScheduleConfig, Tensor,
};
use crate::labels::{decode_output, encode_label, EncodingKind, Label, TaskSchema};
use crate::spectra::Patch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub folds: usize,
    pub seed: u64,
    pub initial_lr: f64,
    pub t_mul: f64,
    pub m_mul: f64,
    pub alpha: f64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10,
            epochs: 300,
            folds: 4,
            seed: 0,
            initial_lr: 1e-3,
            t_mul: 1.5,
            m_mul: 1.0,
            alpha: 1e-5,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn batches_per_epoch(&self, n_train: usize) -> usize {
        n_train.div_ceil(self.batch_size)
    }

    /// Schedule whose first cycle spans one epoch of batches.
    pub fn schedule(&self, n_train: usize) -> ScheduleConfig {
        ScheduleConfig {
            initial_lr: self.initial_lr,
            first_decay_steps: self.batches_per_epoch(n_train).max(1),
            t_mul: self.t_mul,
            m_mul: self.m_mul,
            alpha: self.alpha,
        }
    }

    pub fn validate(&self) -> Result<(), CarenetError> {
        if self.batch_size == 0 {
            return Err(CarenetError::Config("batch_size must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(CarenetError::Config(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        self.schedule(1).validate()?;
        Ok(())
    }
}

/// A patch with its encoded target and class weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub patch: Patch,
    pub target: Vec<f64>,
    /// Ground-truth class, `None` for regression.
    pub class_index: Option<usize>,
    pub weight: f64,
}

impl Example {
    /// `weights` are indexed by class; regression examples get weight 1.
    pub fn new(
        patch: Patch,
        schema: &TaskSchema,
        label: &Label,
        weights: &[f64],
    ) -> Result<Example, CarenetError> {
        let target = encode_label(schema, label)?;
        let (class_index, weight) = match schema.kind {
            EncodingKind::Regression => (None, 1.0),
            _ => {
                let c = schema.stratum(label)?;
                let w = *weights
                    .get(c)
                    .ok_or_else(|| CarenetError::Input(format!("no class weight for class {c}")))?;
                (Some(c), w)
            }
        };
        Ok(Example {
            patch,
            target,
            class_index,
            weight,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
    /// Mean unweighted dev loss, the tie-breaker between equal metrics.
    pub dev_loss: f64,
    pub best_dev_metric: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: NetworkGraph,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

pub fn patch_tensor(patch: &Patch) -> Tensor {
    Tensor {
        shape: vec![patch.size, patch.size, patch.channels],
        data: patch.data.iter().map(|&v| v as f64).collect(),
    }
}

fn check_patch(graph: &NetworkGraph, patch: &Patch) -> Result<(), CarenetError> {
    let [h, w, c] = graph.spec.input_shape;
    if (patch.size, patch.size, patch.channels) != (h, w, c) {
        return Err(CarenetError::Input(format!(
            "patch {}×{}×{} does not match network input {h}×{w}×{c}",
            patch.size, patch.size, patch.channels
        )));
    }
    Ok(())
}

/// Head-activated outputs for one patch.
pub fn predict_patch(graph: &NetworkGraph, patch: &Patch) -> Result<Vec<f64>, CarenetError> {
    check_patch(graph, patch)?;
    Ok(graph.predict(&patch_tensor(patch))?)
}

/// Patch-level dev metric: accuracy for classification, MAE on the scaled
/// target for regression.
pub fn dev_metric(
    graph: &NetworkGraph,
    examples: &[Example],
    schema: &TaskSchema,
) -> Result<f64, CarenetError> {
    dev_scores(graph, examples, schema).map(|(m, _)| m)
}

/// Dev metric and mean unweighted loss from one forward pass per example.
pub fn dev_scores(
    graph: &NetworkGraph,
    examples: &[Example],
    schema: &TaskSchema,
) -> Result<(f64, f64), CarenetError> {
    let scored: Vec<(f64, f64)> = examples
        .par_iter()
        .map(|e| {
            check_patch(graph, &e.patch)?;
            let (out, trace) = network_eval(graph, &patch_tensor(&e.patch))?;
            let loss = compute_loss(schema.kind, trace.logits(), &e.target, 1.0)?;
            let hit = match schema.kind {
                EncodingKind::Regression => (out[0] - e.target[0]).abs(),
                _ => (decode_output(schema, &out)?.class_index() == e.class_index) as u8 as f64,
            };
            Ok((hit, loss))
        })
        .collect::<Result<_, CarenetError>>()?;
    let n = examples.len() as f64;
    let (m, l) = scored
        .iter()
        .fold((0.0, 0.0), |(m, l), (a, b)| (m + a, l + b));
    Ok((m / n, l / n))
}

/// Strictly better metric, or the same metric with a lower dev loss.
fn improves(kind: EncodingKind, candidate: (f64, f64), best: Option<(f64, f64)>) -> bool {
    let Some((bm, bl)) = best else { return true };
    let (m, l) = candidate;
    let better = if kind == EncodingKind::Regression {
        m < bm
    } else {
        m > bm
    };
    better || (m == bm && l < bl)
}

pub fn train_model(
    graph: &NetworkGraph,
    train: &[Example],
    dev: &[Example],
    schema: &TaskSchema,
    config: &TrainConfig,
) -> Result<TrainOutcome, CarenetError> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(CarenetError::Input(format!(
            "train ({}) and dev ({}) sets must be non-empty",
            train.len(),
            dev.len()
        )));
    }
    let mut model = graph.clone();
    let mut best = graph.clone();
    let mut best_metric = None;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(config.epochs);
    let schedule = config.schedule(train.len());
    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut opt = OptimizerState::new(&sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let transforms: Vec<D4> = order
            .iter()
            .map(|_| {
                if config.augment {
                    D4::random(&mut rng)
                } else {
                    D4::Identity
                }
            })
            .collect();
        let mut loss_sum = 0.0;
        let mut lr = schedule.initial_lr;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let start = b * config.batch_size;
            let per: Vec<(f64, Grads)> = chunk
                .par_iter()
                .zip(&transforms[start..start + chunk.len()])
                .map(|(&i, &t)| {
                    let e = &train[i];
                    let x = patch_tensor(&apply_d4(&e.patch, t));
                    let trace = model.forward(&x)?;
                    let (loss, dlogits) =
                        loss_and_grad(schema.kind, trace.logits(), &e.target, e.weight)?;
                    Ok((loss, model.backward(&x, &trace, &dlogits, false).0))
                })
                .collect::<Result<_, crate::autonn::NnError>>()
                .map_err(|e| CarenetError::Training(format!("epoch {epoch}, batch {b}: {e}")))?;
            let mut grads = Grads::zeros_like(&model);
            for (loss, g) in &per {
                loss_sum += loss;
                grads.add_assign(g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            lr = lr_at_step(&schedule, opt.step);
            adam_step(&mut opt, &mut model.params_mut(), &grads.params, lr)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(CarenetError::Training(format!(
                "epoch {epoch}: train loss {train_loss}"
            )));
        }
        let (metric, dev_loss) = dev_scores(&model, dev, schema)?;
        if improves(schema.kind, (metric, dev_loss), best_metric) {
            best_metric = Some((metric, dev_loss));
            best = model.clone();
            best_epoch = epoch;
        }
        log::debug!(
            "epoch {epoch}: loss {train_loss:.6}, dev {metric:.4} ({dev_loss:.6}), lr {lr:.3e}"
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            dev_metric: metric,
            dev_loss,
            best_dev_metric: best_metric.unwrap().0,
            lr,
        });
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

/// `epoch,train_loss,dev_metric,dev_loss,best_dev_metric,lr` CSV.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<(), CarenetError> {
    let err = |e: csv::Error| CarenetError::Io(std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record([
        "epoch",
        "train_loss",
        "dev_metric",
        "dev_loss",
        "best_dev_metric",
        "lr",
    ])
    .map_err(err)?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            format!("{:.12e}", r.train_loss),
            format!("{:.12e}", r.dev_metric),
            format!("{:.12e}", r.dev_loss),
            format!("{:.12e}", r.best_dev_metric),
            format!("{:.12e}", r.lr),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carenet::{build_carenet, CaReNetConfig};
    use crate::labels::{Task, TaskSchema};

    fn toy(label: usize, n: usize) -> Patch {
        let ch = 4;
        let data = (0..n * n * ch)
            .map(|i| if i % ch == label { 1.0 } else { 0.1 })
            .collect();
        Patch {
            size: n,
            channels: ch,
            data,
            origin: (0, 0),
            zero_count: 0,
            sample_id: "S".into(),
            patient_id: "P".into(),
        }
    }

    fn small() -> (NetworkGraph, TaskSchema, Vec<Example>) {
        let schema = TaskSchema::for_task(Task::Type);
        let cfg = CaReNetConfig {
            patch_size: 4,
            ..CaReNetConfig::desk(4)
        };
        let g = build_carenet(&cfg, &schema, 0).unwrap();
        let ex = (0..6)
            .map(|i| {
                let c = i % 2;
                Example::new(
                    toy(c, 4),
                    &schema,
                    &Label::Class(schema.classes[c].clone()),
                    &[1.0, 1.0],
                )
                .unwrap()
            })
            .collect();
        (g, schema, ex)
    }

    #[test]
    fn zero_epochs_returns_initial() {
        let (g, schema, ex) = small();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train_model(&g, &ex, &ex, &schema, &cfg).unwrap();
        assert_eq!(out.best, g);
        assert!(out.history.is_empty());
    }

    #[test]
    fn full_batch_no_augment_is_one_step_per_epoch() {
        let (g, schema, ex) = small();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: ex.len(),
            augment: false,
            ..TrainConfig::default()
        };
        let out = train_model(&g, &ex, &ex, &schema, &cfg).unwrap();
        // Reproduce the single full-batch Adam step by hand.
        let mut grads = Grads::zeros_like(&g);
        for e in &ex {
            let x = patch_tensor(&e.patch);
            let tr = g.forward(&x).unwrap();
            let (_, d) = loss_and_grad(schema.kind, tr.logits(), &e.target, e.weight).unwrap();
            grads.add_assign(&g.backward(&x, &tr, &d, false).0);
        }
        grads.scale(1.0 / ex.len() as f64);
        let mut manual = g.clone();
        let mut opt =
            OptimizerState::new(&manual.params().iter().map(|p| p.len()).collect::<Vec<_>>());
        adam_step(&mut opt, &mut manual.params_mut(), &grads.params, 1e-3).unwrap();
        // Training sums the batch in shuffled order, so compare to rounding.
        for (a, b) in out.best.params().iter().zip(manual.params()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_ne!(out.best.params(), g.params());
    }

    #[test]
    fn history_deterministic_and_best_monotone() {
        let (g, schema, ex) = small();
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let a = train_model(&g, &ex, &ex, &schema, &cfg).unwrap();
        let b = train_model(&g, &ex, &ex, &schema, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        for w in a.history.windows(2) {
            assert!(w[1].best_dev_metric >= w[0].best_dev_metric);
        }
    }

    #[test]
    fn predict_checks_channels() {
        let (g, _, _) = small();
        assert!(predict_patch(&g, &toy(0, 5)).is_err());
        let p = toy(1, 4);
        assert_eq!(
            predict_patch(&g, &p).unwrap(),
            predict_patch(&g, &p).unwrap()
        );
    }
}
