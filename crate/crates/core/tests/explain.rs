use carenet_core::autonn::{Activation, BranchSpec, GraphSpec, LayerSpec, NetworkGraph};
use carenet_core::explain::*;
use carenet_core::spectra::{Patch, WavenumberAxis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(n: usize, c: usize, spatial_filters: usize, spatial_relu: bool) -> GraphSpec {
    let mut spatial = vec![LayerSpec::Conv2d {
        filters: spatial_filters,
        kernel: 3,
    }];
    if spatial_relu {
        spatial.push(LayerSpec::Activation {
            function: Activation::Relu,
        });
    }
    spatial.push(LayerSpec::GlobalAvgPool);
    GraphSpec {
        input_shape: [n, n, c],
        branches: vec![
            BranchSpec {
                name: "spectral".into(),
                layers: vec![
                    LayerSpec::Conv2d {
                        filters: 2,
                        kernel: 1,
                    },
                    LayerSpec::GlobalAvgPool,
                ],
            },
            BranchSpec {
                name: "spatial".into(),
                layers: spatial,
            },
        ],
        trunk: vec![LayerSpec::Dense { units: 1 }],
        head: Activation::Sigmoid,
    }
}

fn random_patch(n: usize, c: usize, seed: u64) -> Patch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Patch {
        size: n,
        channels: c,
        data: (0..n * n * c)
            .map(|_| rng.gen_range(-1.0f32..1.0))
            .collect(),
        origin: (0, 0),
        zero_count: 0,
        sample_id: "S".into(),
        patient_id: "P".into(),
    }
}

/// Same-padded 3×3 convolution evaluated directly from its definition.
fn conv3(patch: &Patch, kernel: &[f64], filters: usize, f: usize, bias: f64) -> Vec<f64> {
    let (n, c) = (patch.size as i64, patch.channels);
    let mut out = Vec::new();
    for r in 0..n {
        for q in 0..n {
            let mut s = bias;
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (y, x) = (r + dy, q + dx);
                    if y < 0 || x < 0 || y >= n || x >= n {
                        continue;
                    }
                    for ch in 0..c {
                        let w = kernel[((((dy + 1) * 3 + dx + 1) as usize) * c + ch) * filters + f];
                        s += patch.pixel(y as usize, x as usize)[ch] as f64 * w;
                    }
                }
            }
            out.push(s);
        }
    }
    out
}

#[test]
fn two_map_hand_computation() {
    let (n, c) = (6, 2);
    let mut g = NetworkGraph::build(spec(n, c, 2, false), 3).unwrap();
    // Fusion weights for the two spatial GAP features (indices 2, 3 of the concat).
    let (w1, w2) = (0.7, -0.4);
    g.trunk[0].weights = vec![0.1, 0.2, w1, w2];
    let patch = random_patch(n, c, 8);
    let kernel = g.branches[1].layers[0].weights.clone();
    let bias = g.branches[1].layers[0].bias.clone();
    let a1 = conv3(&patch, &kernel, 2, 0, bias[0]);
    let a2 = conv3(&patch, &kernel, 2, 1, bias[1]);
    let hw = (n * n) as f64;
    let raw: Vec<f64> = a1
        .iter()
        .zip(&a2)
        .map(|(x, y)| (w1 / hw * x + w2 / hw * y).max(0.0))
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    assert!(max > 0.0);
    let hm = grad_cam(&g, &patch, 1).unwrap();
    assert_eq!(hm.source_layer, "spatial/conv1");
    for (got, want) in hm.values.iter().zip(&raw) {
        assert!((got - want / max).abs() < 1e-9);
    }
}

#[test]
fn single_map_uniform_gradient_is_relu_of_map() {
    let (n, c) = (5, 3);
    let mut g = NetworkGraph::build(spec(n, c, 1, false), 1).unwrap();
    g.trunk[0].weights = vec![0.0, 0.0, 2.0];
    let patch = random_patch(n, c, 2);
    let layer = &g.branches[1].layers[0];
    let map = conv3(&patch, &layer.weights, 1, 0, layer.bias[0]);
    let relu: Vec<f64> = map.iter().map(|v| v.max(0.0)).collect();
    let max = relu.iter().copied().fold(0.0, f64::max);
    let hm = grad_cam(&g, &patch, 1).unwrap();
    for (got, want) in hm.values.iter().zip(&relu) {
        assert!((got - want / max).abs() < 1e-9);
    }
    // Class 0 of a single-logit head flips the gradient sign.
    let neg = grad_cam(&g, &patch, 0).unwrap();
    let relu_neg: Vec<f64> = map.iter().map(|v| (-v).max(0.0)).collect();
    let max_neg = relu_neg.iter().copied().fold(0.0, f64::max);
    for (got, want) in neg.values.iter().zip(&relu_neg) {
        assert!((got - want / max_neg).abs() < 1e-9);
    }
}

#[test]
fn negative_weights_on_nonnegative_maps_give_zero_heatmap() {
    let mut g = NetworkGraph::build(spec(4, 2, 3, true), 5).unwrap();
    g.trunk[0].weights = vec![0.5, 0.5, -1.0, -0.3, -2.0];
    let hm = grad_cam(&g, &random_patch(4, 2, 1), 1).unwrap();
    assert_eq!(hm.source_layer, "spatial/relu1");
    assert!(hm.values.iter().all(|&v| v == 0.0));
}

#[test]
fn heatmap_upsamples_and_normalises() {
    let spec = GraphSpec {
        input_shape: [8, 8, 2],
        branches: vec![
            BranchSpec {
                name: "spectral".into(),
                layers: vec![
                    LayerSpec::Conv2d {
                        filters: 2,
                        kernel: 1,
                    },
                    LayerSpec::GlobalAvgPool,
                ],
            },
            BranchSpec {
                name: "spatial".into(),
                layers: vec![
                    LayerSpec::Conv2d {
                        filters: 3,
                        kernel: 3,
                    },
                    LayerSpec::Activation {
                        function: Activation::Relu,
                    },
                    LayerSpec::MaxPool2d,
                    LayerSpec::Conv2d {
                        filters: 3,
                        kernel: 3,
                    },
                    LayerSpec::Activation {
                        function: Activation::Relu,
                    },
                    LayerSpec::GlobalAvgPool,
                ],
            },
        ],
        trunk: vec![LayerSpec::Dense { units: 3 }],
        head: Activation::Softmax,
    };
    let g = NetworkGraph::build(spec, 9).unwrap();
    for k in 0..3 {
        let hm = grad_cam(&g, &random_patch(8, 2, k as u64), k).unwrap();
        assert_eq!((hm.height, hm.width, hm.values.len()), (8, 8, 64));
        assert_eq!(hm.source_layer, "spatial/relu2");
        assert!(hm.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let max = hm.values.iter().copied().fold(0.0, f64::max);
        assert!(max == 1.0 || max == 0.0);
    }
    assert!(grad_cam(&g, &random_patch(8, 2, 0), 3).is_err());
}

#[test]
fn bilinear_identity_and_constant() {
    let src: Vec<f64> = (0..12).map(f64::from).collect();
    assert_eq!(bilinear_resize(&src, 3, 4, 3, 4), src);
    assert!(bilinear_resize(&[2.5; 4], 2, 2, 7, 7)
        .iter()
        .all(|&v| (v - 2.5).abs() < 1e-15));
}

fn axis(c: usize) -> WavenumberAxis {
    WavenumberAxis::new(1800.0, 900.0, c).unwrap()
}

#[test]
fn importance_examples() {
    let c = 10;
    let mut g = NetworkGraph::build(spec(4, c, 2, true), 0).unwrap();
    g.branches[0].layers[0].weights = vec![1.0; c * 2];
    let ci = channel_importance(&g, &axis(c), 30, false).unwrap();
    assert!(ci.scores.iter().all(|&s| s == 2.0));

    let mut w = vec![0.0; c * 2];
    w[5 * 2] = 0.3;
    w[5 * 2 + 1] = -0.2;
    g.branches[0].layers[0].weights = w;
    let ci = channel_importance(&g, &axis(c), 30, false).unwrap();
    assert_eq!(ci.top_bands.len(), 1);
    assert!(ci.top_bands[0].contains_index(5));
    assert!((ci.top_bands[0].score - 0.5).abs() < 1e-15);
    let signed = channel_importance(&g, &axis(c), 30, true).unwrap();
    assert!((signed.scores[5] - 0.1).abs() < 1e-15);
    assert!(channel_importance(&g, &axis(c + 1), 30, false).is_err());
}

#[test]
fn importance_invariant_to_filter_permutation() {
    let c = 12;
    let g = NetworkGraph::build(spec(4, c, 2, true), 4).unwrap();
    let mut p = g.clone();
    let w = &g.branches[0].layers[0].weights;
    p.branches[0].layers[0].weights = (0..c).flat_map(|ci| [w[ci * 2 + 1], w[ci * 2]]).collect();
    let a = channel_importance(&g, &axis(c), 5, false).unwrap();
    let b = channel_importance(&p, &axis(c), 5, false).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bands_group_contiguous_runs() {
    let scores = [0.1, 0.9, 0.8, 0.05, 0.7, 0.0, 0.95, 0.2];
    let bands = group_bands(&scores, &axis(8), 4);
    let spans: Vec<(usize, usize)> = bands.iter().map(|b| (b.start, b.end)).collect();
    assert_eq!(spans, vec![(1, 2), (6, 6), (4, 4)]);
    assert_eq!(bands[0].wavenumber_hi, axis(8).point(1));
}

#[test]
fn path_contribution_examples() {
    let (n, c) = (4, 3);
    let mut g = NetworkGraph::build(spec(n, c, 2, true), 2).unwrap();
    g.trunk[0].weights = vec![0.3, -0.5, 0.8, 0.2];
    let patches: Vec<Patch> = (0..3).map(|s| random_patch(n, c, s)).collect();
    let pc = path_contribution(&g, &patches).unwrap();
    assert!(pc.spectral > 0.0 && pc.spectral < 1.0);
    assert!((pc.spectral + pc.spatial - 1.0).abs() < 1e-12);

    let mut scaled = g.clone();
    scaled.trunk[0].weights.iter_mut().for_each(|w| *w *= 3.5);
    let ps = path_contribution(&scaled, &patches).unwrap();
    assert!((ps.spectral - pc.spectral).abs() < 1e-12);

    let mut dead = g.clone();
    dead.branches[1].layers[0]
        .weights
        .iter_mut()
        .for_each(|w| *w = 0.0);
    assert_eq!(path_contribution(&dead, &patches).unwrap().spectral, 1.0);
}

#[test]
fn path_contribution_symmetric_case() {
    // Both paths compute the same GAP features through 1×1 and centre-only 3×3 kernels.
    let (n, c) = (4, 2);
    let mut g = NetworkGraph::build(spec(n, c, 2, false), 0).unwrap();
    let k1 = vec![0.4, -0.3, 0.6, 0.2];
    g.branches[0].layers[0].weights = k1.clone();
    let mut k3 = vec![0.0; 9 * c * 2];
    k3[4 * c * 2..5 * c * 2].copy_from_slice(&k1);
    g.branches[1].layers[0].weights = k3;
    g.trunk[0].weights = vec![0.5, -0.7, 0.5, -0.7];
    let pc = path_contribution(&g, &[random_patch(n, c, 1), random_patch(n, c, 2)]).unwrap();
    assert!((pc.spectral - 0.5).abs() < 1e-12 && (pc.spatial - 0.5).abs() < 1e-12);
}

#[test]
fn artifacts_written() {
    let g = NetworkGraph::build(spec(6, 4, 2, true), 1).unwrap();
    let hm = grad_cam(&g, &random_patch(6, 4, 3), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let png_path = dir.path().join("h.png");
    write_heatmap_png(&png_path, &hm).unwrap();
    let decoder = png::Decoder::new(std::fs::File::open(&png_path).unwrap());
    let reader = decoder.read_info().unwrap();
    assert_eq!((reader.info().width, reader.info().height), (6, 6));
    write_heatmap_csv(&dir.path().join("h.csv"), &hm).unwrap();
    let rows = std::fs::read_to_string(dir.path().join("h.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 37);
    let ci = channel_importance(&g, &axis(4), 2, false).unwrap();
    write_importance_csv(&dir.path().join("ci.csv"), &axis(4), &ci).unwrap();
    write_bands_csv(&dir.path().join("bands.csv"), &ci).unwrap();
    let bands = std::fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    assert!(bands.starts_with("rank,wavenumber_hi,wavenumber_lo,score"));
}
