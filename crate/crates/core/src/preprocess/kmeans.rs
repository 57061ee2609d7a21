//! Lloyd's k-means with seeded restarts.
//!
//! Restart 0 is seeded by farthest-point traversal from a random start, the
//! remaining restarts by k-means++ D² sampling. The lowest-inertia run wins;
//! ties go to the earlier restart.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::PreprocessError;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Objective after every assignment step of the winning run.
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            restarts: 5,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(rows: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    rows.par_iter().map(|r| nearest(r, centroids)).unzip()
}

fn farthest_point_init(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![rows[rng.gen_range(0..rows.len())].clone()];
    let mut min_d: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let mut pick = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[pick] {
                pick = i;
            }
        }
        centroids.push(rows[pick].clone());
        for (d, r) in min_d.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &rows[pick]));
        }
    }
    centroids
}

fn plus_plus_init(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![rows[rng.gen_range(0..rows.len())].clone()];
    let mut min_d: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = rows.len() - 1;
            for (i, &d) in min_d.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.gen_range(0..rows.len())
        };
        centroids.push(rows[pick].clone());
        for (d, r) in min_d.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &rows[pick]));
        }
    }
    centroids
}

fn lloyd(rows: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansResult {
    let k = centroids.len();
    let dim = rows[0].len();
    let (mut labels, mut dists) = assign(rows, &centroids);
    let mut history = vec![dists.iter().sum::<f64>()];
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (row, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(row) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            } else {
                // Empty cluster: move it onto the point worst served by its centroid.
                let mut far = 0;
                for (i, &d) in dists.iter().enumerate() {
                    if d > dists[far] {
                        far = i;
                    }
                }
                centroids[j] = rows[far].clone();
                dists[far] = 0.0;
            }
        }
        let (new_labels, new_dists) = assign(rows, &centroids);
        history.push(new_dists.iter().sum());
        let changed = new_labels != labels;
        labels = new_labels;
        dists = new_dists;
        if !changed {
            break;
        }
    }
    KMeansResult {
        labels,
        centroids,
        inertia: *history.last().unwrap(),
        objective_history: history,
    }
}

/// Clusters `rows` into `k` groups.
pub fn kmeans_cluster(
    rows: &[Vec<f64>],
    params: KMeansParams,
) -> Result<KMeansResult, PreprocessError> {
    let KMeansParams {
        k,
        seed,
        max_iter,
        restarts,
    } = params;
    if k == 0 || rows.len() < k {
        return Err(PreprocessError::Input(format!(
            "k-means needs 1 <= k <= N (k = {k}, N = {})",
            rows.len()
        )));
    }
    let dim = rows[0].len();
    if rows
        .iter()
        .any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite()))
    {
        return Err(PreprocessError::Input(
            "k-means rows must be finite and equally sized".into(),
        ));
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let init = if restart == 0 {
            farthest_point_init(rows, k, &mut rng)
        } else {
            plus_plus_init(rows, k, &mut rng)
        };
        let run = lloyd(rows, init, max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}
