//! HeNormal initialisation, Adam and cosine decay with warm restarts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

pub(crate) fn he_normal_fill(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Draws from `N(0, sqrt(2/fan_in))`.
pub fn he_normal_init(shape: &[usize], fan_in: usize, seed: u64) -> Result<Tensor, NnError> {
    if fan_in == 0 {
        return Err(NnError::Config("fan_in must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Ok(Tensor {
        shape: shape.to_vec(),
        data: he_normal_fill(&mut rng, n, fan_in),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(sizes: &[usize]) -> OptimizerState {
        OptimizerState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    state: &mut OptimizerState,
    params: &mut [&mut Vec<f64>],
    grads: &[Vec<f64>],
    lr: f64,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NnError::Shape(format!(
            "adam: {} parameter tensors, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(NnError::Shape(format!("adam: tensor {i} length mismatch")));
        }
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub initial_lr: f64,
    pub first_decay_steps: usize,
    pub t_mul: f64,
    pub m_mul: f64,
    /// Absolute learning-rate floor.
    pub alpha: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            initial_lr: 1e-3,
            first_decay_steps: 1,
            t_mul: 1.5,
            m_mul: 1.0,
            alpha: 1e-5,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let positive =
            self.initial_lr > 0.0 && self.t_mul > 0.0 && self.m_mul > 0.0 && self.alpha > 0.0;
        if !positive || self.first_decay_steps == 0 {
            return Err(NnError::Config(format!(
                "schedule values must be positive: {self:?}"
            )));
        }
        if self.alpha >= self.initial_lr {
            return Err(NnError::Config(format!(
                "alpha {} must be below initial_lr {}",
                self.alpha, self.initial_lr
            )));
        }
        Ok(())
    }

    /// `(cycle index, steps into the cycle, cycle length)`.
    pub fn cycle_at(&self, step: u64) -> (u32, f64, f64) {
        let mut t = step as f64;
        let mut len = self.first_decay_steps as f64;
        let mut i = 0;
        while t >= len {
            t -= len;
            len *= self.t_mul;
            i += 1;
        }
        (i, t, len)
    }
}

pub fn lr_at_step(config: &ScheduleConfig, step: u64) -> f64 {
    let (i, t, len) = config.cycle_at(step);
    let peak = config.initial_lr * config.m_mul.powi(i as i32);
    config.alpha + (peak - config.alpha) * (1.0 + (std::f64::consts::PI * t / len).cos()) / 2.0
}
