use carenet_core::autonn::*;
use carenet_core::labels::EncodingKind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

fn micro_spec(variant: usize, kind: EncodingKind) -> GraphSpec {
    let (out, head) = match kind {
        EncodingKind::Binary => (1, Activation::Sigmoid),
        EncodingKind::OneHot => (4, Activation::Softmax),
        EncodingKind::Ordinal => (4, Activation::Sigmoid),
        EncodingKind::Regression => (1, Activation::Linear),
    };
    let hidden = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Linear,
        Activation::Softmax,
    ][variant % 4];
    let spectral = BranchSpec {
        name: "spectral".into(),
        layers: vec![
            LayerSpec::Conv2d {
                filters: 3,
                kernel: 1,
            },
            LayerSpec::Activation {
                function: Activation::Relu,
            },
            LayerSpec::MaxPool2d,
            LayerSpec::Conv2d {
                filters: 2,
                kernel: 1,
            },
            LayerSpec::GlobalAvgPool,
        ],
    };
    let spatial = BranchSpec {
        name: "spatial".into(),
        layers: vec![
            LayerSpec::Conv2d {
                filters: 2,
                kernel: 3,
            },
            LayerSpec::Activation {
                function: Activation::Relu,
            },
            LayerSpec::MaxPool2d,
            LayerSpec::Conv2d {
                filters: 2,
                kernel: 3,
            },
            LayerSpec::Activation {
                function: Activation::Sigmoid,
            },
            LayerSpec::GlobalAvgPool,
        ],
    };
    let branches = if variant % 3 == 2 {
        vec![spatial]
    } else {
        vec![spectral, spatial]
    };
    GraphSpec {
        input_shape: [4 + variant % 2, 4, 3],
        branches,
        trunk: vec![
            LayerSpec::Dense { units: 5 },
            LayerSpec::Activation { function: hidden },
            LayerSpec::Dense { units: out },
        ],
        head,
    }
}

fn random_target(kind: EncodingKind, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match kind {
        EncodingKind::Binary => vec![rng.gen_range(0..2) as f64],
        EncodingKind::OneHot => {
            let k = rng.gen_range(0..4);
            (0..4).map(|i| (i == k) as u8 as f64).collect()
        }
        EncodingKind::Ordinal => {
            let k = rng.gen_range(0..4);
            (0..4).map(|i| (i <= k) as u8 as f64).collect()
        }
        EncodingKind::Regression => vec![rng.gen::<f64>()],
    }
}

fn loss_of(g: &NetworkGraph, x: &Tensor, t: &[f64], kind: EncodingKind, w: f64) -> f64 {
    let trace = g.forward(x).unwrap();
    compute_loss(kind, trace.logits(), t, w).unwrap()
}

/// Largest per-parameter relative error between analytic and central
/// difference gradients. Relative error is taken against max(|a|, |n|, 1e-6).
fn max_gradient_error(g: &NetworkGraph, x: &Tensor, t: &[f64], kind: EncodingKind, w: f64) -> f64 {
    let (_, grads) = network_grad(g, x, t, kind, w).unwrap();
    let mut worst = 0.0f64;
    let mut probe = g.clone();
    for (ti, analytic) in grads.params.iter().enumerate() {
        for j in 0..analytic.len() {
            let orig = probe.params()[ti][j];
            probe.params_mut()[ti][j] = orig + H;
            let up = loss_of(&probe, x, t, kind, w);
            probe.params_mut()[ti][j] = orig - H;
            let down = loss_of(&probe, x, t, kind, w);
            probe.params_mut()[ti][j] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradients_match_central_differences() {
    let kinds = [
        EncodingKind::Binary,
        EncodingKind::OneHot,
        EncodingKind::Ordinal,
        EncodingKind::Regression,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for net in 0..24 {
        let kind = kinds[net % 4];
        let mut g = NetworkGraph::build(micro_spec(net / 4, kind), net as u64).unwrap();
        for p in g.params_mut() {
            for v in p.iter_mut() {
                *v += rng.gen_range(-0.1..0.1);
            }
        }
        let shape = g.spec.input_shape;
        let x = Tensor::new(
            shape.to_vec(),
            (0..shape.iter().product())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap();
        let t = random_target(kind, &mut rng);
        let w = rng.gen_range(0.5..2.0);
        let err = max_gradient_error(&g, &x, &t, kind, w);
        assert!(
            err <= 1e-3,
            "network {net} ({kind:?}): relative error {err}"
        );
        checked += 1;
    }
    assert_eq!(checked, 24);
}

#[test]
fn zero_class_weight_gives_zero_gradients() {
    let g = NetworkGraph::build(micro_spec(0, EncodingKind::OneHot), 1).unwrap();
    let x = Tensor::new(
        vec![4, 4, 3],
        (0..48).map(|i| (i as f64 * 0.37).sin()).collect(),
    )
    .unwrap();
    let (_, grads) =
        network_grad(&g, &x, &[0.0, 1.0, 0.0, 0.0], EncodingKind::OneHot, 0.0).unwrap();
    assert!(grads.params.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn pool_tie_gradient_mass_conserved() {
    let spec = GraphSpec {
        input_shape: [2, 2, 1],
        branches: vec![BranchSpec {
            name: "p".into(),
            layers: vec![LayerSpec::MaxPool2d, LayerSpec::GlobalAvgPool],
        }],
        trunk: vec![],
        head: Activation::Linear,
    };
    let g = NetworkGraph::build(spec, 0).unwrap();
    let x = Tensor::new(vec![2, 2, 1], vec![1.0, 3.0, 3.0, 2.0]).unwrap();
    let trace = g.forward(&x).unwrap();
    assert_eq!(trace.logits(), &[3.0]);
    let (_, acts) = g.backward(&x, &trace, &[1.0], true);
    let acts = acts.unwrap();
    assert_eq!(acts.branches[0][1].data, vec![1.0]);
    assert_eq!(acts.branches[0][0].data, vec![1.0]);
}

#[test]
fn batch_parallel_sum_is_order_fixed() {
    use rayon::prelude::*;
    let g = NetworkGraph::build(micro_spec(1, EncodingKind::Ordinal), 3).unwrap();
    let xs: Vec<Tensor> = (0..16)
        .map(|k| {
            Tensor::new(
                vec![5, 4, 3],
                (0..60)
                    .map(|i| ((i * 7 + k * 13) as f64 * 0.11).cos())
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let per: Vec<Grads> = pool.install(|| {
            xs.par_iter()
                .map(|x| {
                    network_grad(&g, x, &[1.0, 1.0, 0.0, 0.0], EncodingKind::Ordinal, 1.0)
                        .unwrap()
                        .1
                })
                .collect()
        });
        let mut total = Grads::zeros_like(&g);
        per.iter().for_each(|p| total.add_assign(p));
        total
    };
    assert_eq!(run(1), run(4));
}

fn map3(h: usize, w: usize, c: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, h * w * c)
        .prop_map(move |d| Tensor::new(vec![h, w, c], d).unwrap())
}

proptest! {
    #[test]
    fn gap_is_linear(x in map3(3, 5, 2), y in map3(3, 5, 2), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let spec = GraphSpec {
            input_shape: [3, 5, 2],
            branches: vec![BranchSpec { name: "g".into(), layers: vec![LayerSpec::GlobalAvgPool] }],
            trunk: vec![],
            head: Activation::Linear,
        };
        let g = NetworkGraph::build(spec, 0).unwrap();
        let mix = Tensor::new(vec![3, 5, 2], x.data.iter().zip(&y.data).map(|(u, v)| a * u + b * v).collect()).unwrap();
        let gx = g.predict(&x).unwrap();
        let gy = g.predict(&y).unwrap();
        let gm = g.predict(&mix).unwrap();
        for k in 0..2 {
            prop_assert!((gm[k] - (a * gx[k] + b * gy[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_is_translation_equivariant_inside(x in map3(7, 7, 2), seed in 0u64..1000) {
        let spec = GraphSpec {
            input_shape: [7, 7, 2],
            branches: vec![BranchSpec {
                name: "c".into(),
                layers: vec![LayerSpec::Conv2d { filters: 3, kernel: 3 }, LayerSpec::GlobalAvgPool],
            }],
            trunk: vec![],
            head: Activation::Linear,
        };
        let g = NetworkGraph::build(spec, seed).unwrap();
        // Shift right by one column, zero-filling column 0.
        let mut shifted = vec![0.0; x.len()];
        for r in 0..7 {
            for c in 1..7 {
                for ch in 0..2 {
                    shifted[(r * 7 + c) * 2 + ch] = x.at(r, c - 1, ch);
                }
            }
        }
        let shifted = Tensor::new(vec![7, 7, 2], shifted).unwrap();
        let a = &g.forward(&x).unwrap().branches[0][0];
        let b = &g.forward(&shifted).unwrap().branches[0][0];
        for r in 1..6 {
            for c in 2..6 {
                for f in 0..3 {
                    prop_assert!((b.at(r, c, f) - a.at(r, c - 1, f)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn softmax_and_sigmoid_ranges(z in prop::collection::vec(-50.0f64..50.0, 1..8)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Beyond |z| ≈ 36 the f64 sigmoid rounds to exactly 0 or 1.
        for v in z.iter().map(|v| v * 0.7) {
            let s = sigmoid(v);
            prop_assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn schedule_bounded_and_restarts(first in 1usize..50, step in 0u64..5000) {
        let cfg = ScheduleConfig { first_decay_steps: first, ..ScheduleConfig::default() };
        let lr = lr_at_step(&cfg, step);
        prop_assert!(lr >= cfg.alpha && lr <= cfg.initial_lr);
        let (_, t, len) = cfg.cycle_at(step);
        prop_assert!(t >= 0.0 && t < len);
    }
}
