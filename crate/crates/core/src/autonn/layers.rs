//! Layer kinds and their forward/backward kernels.

use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Same-padded square convolution, stride 1.
    Conv2d {
        filters: usize,
        kernel: usize,
    },
    /// 2×2 window, stride 2, zero padding on odd sizes.
    MaxPool2d,
    GlobalAvgPool,
    Dense {
        units: usize,
    },
    Activation {
        function: Activation,
    },
}

impl LayerSpec {
    pub fn short_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv",
            LayerSpec::MaxPool2d => "pool",
            LayerSpec::GlobalAvgPool => "gap",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Activation {
                function: Activation::Relu,
            } => "relu",
            LayerSpec::Activation {
                function: Activation::Sigmoid,
            } => "sigmoid",
            LayerSpec::Activation {
                function: Activation::Softmax,
            } => "softmax",
            LayerSpec::Activation {
                function: Activation::Linear,
            } => "linear",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    /// Output shape for `input`, or an error naming `layer`.
    pub fn output_shape(&self, input: &[usize], layer: &str) -> Result<Vec<usize>, NnError> {
        let map = || match *input {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(NnError::Shape(format!(
                "layer {layer} needs an h×w×c input, got {input:?}"
            ))),
        };
        Ok(match *self {
            LayerSpec::Conv2d { filters, kernel } => {
                if kernel != 1 && kernel != 3 {
                    return Err(NnError::Config(format!(
                        "layer {layer}: kernel {kernel} not supported (1 or 3)"
                    )));
                }
                if filters == 0 {
                    return Err(NnError::Config(format!("layer {layer}: zero filters")));
                }
                let (h, w, _) = map()?;
                vec![h, w, filters]
            }
            LayerSpec::MaxPool2d => {
                let (h, w, c) = map()?;
                vec![h.div_ceil(2), w.div_ceil(2), c]
            }
            LayerSpec::GlobalAvgPool => vec![map()?.2],
            LayerSpec::Dense { units } => match *input {
                [_] if units > 0 => vec![units],
                [_] => return Err(NnError::Config(format!("layer {layer}: zero units"))),
                _ => {
                    return Err(NnError::Shape(format!(
                        "layer {layer} needs a vector input, got {input:?}"
                    )))
                }
            },
            LayerSpec::Activation {
                function: Activation::Softmax,
            } if input.len() != 1 => {
                return Err(NnError::Shape(format!(
                    "layer {layer}: softmax needs a vector input, got {input:?}"
                )))
            }
            LayerSpec::Activation { .. } => input.to_vec(),
        })
    }

    /// `(weight count, bias count, fan_in)` for parameterised layers.
    pub fn param_sizes(&self, input: &[usize]) -> Option<(usize, usize, usize)> {
        match *self {
            LayerSpec::Conv2d { filters, kernel } => {
                let c = input[input.len() - 1];
                let fan_in = kernel * kernel * c;
                Some((fan_in * filters, filters, fan_in))
            }
            LayerSpec::Dense { units } => Some((input[0] * units, units, input[0])),
            _ => None,
        }
    }
}

/// A layer with its resolved shapes and parameters. Conv kernels are stored
/// `[ky][kx][cin][f]`, dense weights `[in][out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn forward(&self, x: &Tensor) -> Tensor {
        match self.spec {
            LayerSpec::Conv2d { filters, kernel } => {
                conv_forward(x, kernel, filters, &self.weights, &self.bias)
            }
            LayerSpec::MaxPool2d => pool_forward(x),
            LayerSpec::GlobalAvgPool => gap_forward(x),
            LayerSpec::Dense { units } => dense_forward(x, units, &self.weights, &self.bias),
            LayerSpec::Activation { function } => activation_forward(x, function),
        }
    }

    /// Accumulates parameter gradients into `dw`/`db` and returns the input
    /// gradient when `need_dx`.
    pub fn backward(
        &self,
        x: &Tensor,
        y: &Tensor,
        dy: &Tensor,
        need_dx: bool,
        dw: &mut [f64],
        db: &mut [f64],
    ) -> Option<Tensor> {
        match self.spec {
            LayerSpec::Conv2d { filters, kernel } => {
                conv_backward(x, kernel, filters, &self.weights, dy, dw, db, need_dx)
            }
            LayerSpec::MaxPool2d => need_dx.then(|| pool_backward(x, dy)),
            LayerSpec::GlobalAvgPool => need_dx.then(|| gap_backward(x, dy)),
            LayerSpec::Dense { units } => {
                dense_backward(x, units, &self.weights, dy, dw, db, need_dx)
            }
            LayerSpec::Activation { function } => {
                need_dx.then(|| activation_backward(x, y, dy, function))
            }
        }
    }
}

fn conv_forward(x: &Tensor, k: usize, f: usize, w: &[f64], b: &[f64]) -> Tensor {
    let (h, wd, c) = x.dims3().expect("conv input");
    let pad = k / 2;
    let mut out = vec![0.0; h * wd * f];
    for row in 0..h {
        for col in 0..wd {
            let o = &mut out[(row * wd + col) * f..][..f];
            o.copy_from_slice(b);
            for ky in 0..k {
                let Some(iy) = (row + ky).checked_sub(pad).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = (col + kx).checked_sub(pad).filter(|&v| v < wd) else {
                        continue;
                    };
                    let xin = &x.data[(iy * wd + ix) * c..][..c];
                    let wk = &w[(ky * k + kx) * c * f..][..c * f];
                    for (ci, &xv) in xin.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        for (oj, wj) in o.iter_mut().zip(&wk[ci * f..(ci + 1) * f]) {
                            *oj += xv * wj;
                        }
                    }
                }
            }
        }
    }
    Tensor {
        shape: vec![h, wd, f],
        data: out,
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &Tensor,
    k: usize,
    f: usize,
    w: &[f64],
    dy: &Tensor,
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Tensor> {
    let (h, wd, c) = x.dims3().expect("conv input");
    let pad = k / 2;
    let mut dx = if need_dx {
        vec![0.0; h * wd * c]
    } else {
        Vec::new()
    };
    for row in 0..h {
        for col in 0..wd {
            let g = &dy.data[(row * wd + col) * f..][..f];
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (bj, gj) in db.iter_mut().zip(g) {
                *bj += gj;
            }
            for ky in 0..k {
                let Some(iy) = (row + ky).checked_sub(pad).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = (col + kx).checked_sub(pad).filter(|&v| v < wd) else {
                        continue;
                    };
                    let base = (iy * wd + ix) * c;
                    let xin = &x.data[base..base + c];
                    let off = (ky * k + kx) * c * f;
                    for (ci, &xv) in xin.iter().enumerate() {
                        let lo = off + ci * f;
                        if xv != 0.0 {
                            for (dwj, gj) in dw[lo..lo + f].iter_mut().zip(g) {
                                *dwj += xv * gj;
                            }
                        }
                        if need_dx {
                            dx[base + ci] +=
                                w[lo..lo + f].iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
        }
    }
    need_dx.then(|| Tensor {
        shape: x.shape.clone(),
        data: dx,
    })
}

/// Flat input index of each pool window's maximum, `None` when a zero pad
/// cell wins. Candidates are scanned in row-major order; ties keep the first.
fn pool_argmax(x: &Tensor) -> (Vec<usize>, Vec<f64>, Vec<Option<usize>>) {
    let (h, w, c) = x.dims3().expect("pool input");
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut values = vec![0.0; oh * ow * c];
    let mut arg = vec![None; oh * ow * c];
    for orow in 0..oh {
        for ocol in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = None;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (r, q) = (2 * orow + dy, 2 * ocol + dx);
                        let (v, at) = if r < h && q < w {
                            let i = (r * w + q) * c + ch;
                            (x.data[i], Some(i))
                        } else {
                            (0.0, None)
                        };
                        if v > best {
                            best = v;
                            best_at = at;
                        }
                    }
                }
                let o = (orow * ow + ocol) * c + ch;
                values[o] = best;
                arg[o] = best_at;
            }
        }
    }
    (vec![oh, ow, c], values, arg)
}

fn pool_forward(x: &Tensor) -> Tensor {
    let (shape, data, _) = pool_argmax(x);
    Tensor { shape, data }
}

fn pool_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let (_, _, arg) = pool_argmax(x);
    let mut dx = vec![0.0; x.len()];
    for (g, at) in dy.data.iter().zip(arg) {
        if let Some(i) = at {
            dx[i] += g;
        }
    }
    Tensor {
        shape: x.shape.clone(),
        data: dx,
    }
}

fn gap_forward(x: &Tensor) -> Tensor {
    let (h, w, c) = x.dims3().expect("gap input");
    let mut out = vec![0.0; c];
    for px in x.data.chunks_exact(c) {
        for (o, v) in out.iter_mut().zip(px) {
            *o += v;
        }
    }
    let n = (h * w) as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Tensor::vector(out)
}

fn gap_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let (h, w, c) = x.dims3().expect("gap input");
    let n = (h * w) as f64;
    let scaled: Vec<f64> = dy.data.iter().map(|g| g / n).collect();
    let mut dx = Vec::with_capacity(x.len());
    for _ in 0..h * w {
        dx.extend_from_slice(&scaled[..c]);
    }
    Tensor {
        shape: x.shape.clone(),
        data: dx,
    }
}

fn dense_forward(x: &Tensor, units: usize, w: &[f64], b: &[f64]) -> Tensor {
    let mut out = b.to_vec();
    for (i, &xv) in x.data.iter().enumerate() {
        for (o, wv) in out.iter_mut().zip(&w[i * units..(i + 1) * units]) {
            *o += xv * wv;
        }
    }
    Tensor::vector(out)
}

fn dense_backward(
    x: &Tensor,
    units: usize,
    w: &[f64],
    dy: &Tensor,
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Tensor> {
    for (bj, g) in db.iter_mut().zip(&dy.data) {
        *bj += g;
    }
    for (i, &xv) in x.data.iter().enumerate() {
        for (dwj, g) in dw[i * units..(i + 1) * units].iter_mut().zip(&dy.data) {
            *dwj += xv * g;
        }
    }
    need_dx.then(|| {
        let dx = (0..x.len())
            .map(|i| {
                w[i * units..(i + 1) * units]
                    .iter()
                    .zip(&dy.data)
                    .map(|(a, g)| a * g)
                    .sum()
            })
            .collect();
        Tensor {
            shape: x.shape.clone(),
            data: dx,
        }
    })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn activate(z: &[f64], function: Activation) -> Vec<f64> {
    match function {
        Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
        Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
        Activation::Softmax => softmax(z),
        Activation::Linear => z.to_vec(),
    }
}

fn activation_forward(x: &Tensor, function: Activation) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: activate(&x.data, function),
    }
}

fn activation_backward(x: &Tensor, y: &Tensor, dy: &Tensor, function: Activation) -> Tensor {
    let data = match function {
        Activation::Relu => x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
        Activation::Sigmoid => y
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&s, &g)| g * s * (1.0 - s))
            .collect(),
        Activation::Softmax => {
            let dot: f64 = y.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
            y.data
                .iter()
                .zip(&dy.data)
                .map(|(&s, &g)| s * (g - dot))
                .collect()
        }
        Activation::Linear => dy.data.clone(),
    };
    Tensor {
        shape: x.shape.clone(),
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(spec: LayerSpec, in_shape: &[usize], weights: Vec<f64>, bias: Vec<f64>) -> Layer {
        let out_shape = spec.output_shape(in_shape, "t").unwrap();
        Layer {
            name: "t".into(),
            spec,
            in_shape: in_shape.to_vec(),
            out_shape,
            weights,
            bias,
        }
    }

    #[test]
    fn conv1x1_channel_mix() {
        // 2×2×3 input, kernel picks channel 0 for filter 0 and sums channels 1,2 for filter 1.
        let x = Tensor::new(vec![2, 2, 3], (1..=12).map(f64::from).collect()).unwrap();
        let w = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let l = layer(
            LayerSpec::Conv2d {
                filters: 2,
                kernel: 1,
            },
            &[2, 2, 3],
            w,
            vec![0.5, 0.0],
        );
        let y = l.forward(&x);
        assert_eq!(y.shape, vec![2, 2, 2]);
        assert_eq!(y.data, vec![1.5, 5.0, 4.5, 11.0, 7.5, 17.0, 10.5, 23.0]);
    }

    #[test]
    fn conv3x3_same_padding_sums_neighbourhood() {
        let x = Tensor::new(vec![3, 3, 1], vec![1.0; 9]).unwrap();
        let l = layer(
            LayerSpec::Conv2d {
                filters: 1,
                kernel: 3,
            },
            &[3, 3, 1],
            vec![1.0; 9],
            vec![0.0],
        );
        assert_eq!(
            l.forward(&x).data,
            vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]
        );
    }

    #[test]
    fn pool_odd_size_and_tie_rule() {
        let x = Tensor::new(
            vec![3, 3, 1],
            vec![-1.0, -2.0, 3.0, -4.0, -5.0, 1.0, 2.0, 2.0, -7.0],
        )
        .unwrap();
        let l = layer(LayerSpec::MaxPool2d, &[3, 3, 1], vec![], vec![]);
        let y = l.forward(&x);
        assert_eq!(y.shape, vec![2, 2, 1]);
        // Bottom-right window holds only -7 and three zero pads.
        assert_eq!(y.data, vec![-1.0, 3.0, 2.0, 0.0]);
        let dy = Tensor::new(vec![2, 2, 1], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let dx = l.backward(&x, &y, &dy, true, &mut [], &mut []).unwrap();
        // Tie between the two 2.0 entries routes to the first; pad absorbs one unit.
        assert_eq!(dx.data, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn gap_of_constant_map() {
        let x = Tensor::new(vec![8, 8, 5], vec![2.5; 320]).unwrap();
        let l = layer(LayerSpec::GlobalAvgPool, &[8, 8, 5], vec![], vec![]);
        assert_eq!(l.forward(&x).data, vec![2.5; 5]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -3.0, 2.0, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn shape_errors_name_layer() {
        let err = LayerSpec::Dense { units: 3 }
            .output_shape(&[4, 4, 2], "trunk/dense1")
            .unwrap_err();
        assert!(err.to_string().contains("trunk/dense1"));
        assert!(LayerSpec::Conv2d {
            filters: 2,
            kernel: 5
        }
        .output_shape(&[4, 4, 2], "c")
        .is_err());
    }
}
