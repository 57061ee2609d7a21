//! Multi-branch network: a shared input feeds named branches that each end
//! in a vector; the vectors are concatenated and passed through a trunk.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{activate, Activation, Layer, LayerSpec};
use super::optim::he_normal_fill;
use super::{NnError, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub input_shape: [usize; 3],
    pub branches: Vec<BranchSpec>,
    pub trunk: Vec<LayerSpec>,
    /// Applied to the trunk output (the logits) to produce predictions.
    pub head: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    pub spec: GraphSpec,
    pub branches: Vec<Branch>,
    pub trunk: Vec<Layer>,
}

/// Cached layer outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub branches: Vec<Vec<Tensor>>,
    pub concat: Tensor,
    pub trunk: Vec<Tensor>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        &self.trunk.last().unwrap_or(&self.concat).data
    }
}

/// Gradients with respect to every layer output.
#[derive(Debug, Clone)]
pub struct ActGrads {
    pub branches: Vec<Vec<Tensor>>,
    pub trunk: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    /// Aligned with [`NetworkGraph::params`].
    pub params: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(graph: &NetworkGraph) -> Grads {
        Grads {
            params: graph.params().iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.params.iter_mut().flatten().for_each(|v| *v *= s);
    }
}

fn build_layers(
    prefix: &str,
    specs: &[LayerSpec],
    mut shape: Vec<usize>,
    rng_seed: u64,
    stream: &mut u64,
) -> Result<(Vec<Layer>, Vec<usize>), NnError> {
    let mut layers = Vec::with_capacity(specs.len());
    let mut counters = std::collections::HashMap::<&str, usize>::new();
    for spec in specs {
        let short = spec.short_name();
        let n = counters.entry(short).or_insert(0);
        *n += 1;
        let name = if matches!(spec, LayerSpec::GlobalAvgPool) {
            format!("{prefix}/gap")
        } else {
            format!("{prefix}/{short}{n}")
        };
        let out_shape = spec.output_shape(&shape, &name)?;
        let (weights, bias) = match spec.param_sizes(&shape) {
            Some((nw, nb, fan_in)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                rng.set_stream(*stream);
                *stream += 1;
                (he_normal_fill(&mut rng, nw, fan_in), vec![0.0; nb])
            }
            None => (Vec::new(), Vec::new()),
        };
        layers.push(Layer {
            name,
            spec: *spec,
            in_shape: shape,
            out_shape: out_shape.clone(),
            weights,
            bias,
        });
        shape = out_shape;
    }
    Ok((layers, shape))
}

impl NetworkGraph {
    /// Resolves shapes and HeNormal-initialises kernels (biases zero). Each
    /// parameterised layer draws from its own stream of `seed`.
    pub fn build(spec: GraphSpec, seed: u64) -> Result<NetworkGraph, NnError> {
        if spec.branches.is_empty() {
            return Err(NnError::Config("graph needs at least one branch".into()));
        }
        if spec.input_shape.contains(&0) {
            return Err(NnError::Config(format!(
                "input shape {:?} has a zero dimension",
                spec.input_shape
            )));
        }
        let mut stream = 0;
        let mut branches = Vec::new();
        let mut concat_len = 0;
        for b in &spec.branches {
            if spec.branches.iter().filter(|o| o.name == b.name).count() > 1 {
                return Err(NnError::Config(format!(
                    "duplicate branch name '{}'",
                    b.name
                )));
            }
            let (layers, out) = build_layers(
                &b.name,
                &b.layers,
                spec.input_shape.to_vec(),
                seed,
                &mut stream,
            )?;
            if out.len() != 1 {
                return Err(NnError::Shape(format!(
                    "branch {} must end in a vector, got {out:?}",
                    b.name
                )));
            }
            concat_len += out[0];
            branches.push(Branch {
                name: b.name.clone(),
                layers,
            });
        }
        let (trunk, out) = build_layers("trunk", &spec.trunk, vec![concat_len], seed, &mut stream)?;
        if spec.head == Activation::Relu {
            return Err(NnError::Config("relu is not a head activation".into()));
        }
        if out.len() != 1 {
            return Err(NnError::Shape(format!(
                "trunk output must be a vector, got {out:?}"
            )));
        }
        Ok(NetworkGraph {
            spec,
            branches,
            trunk,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.trunk
            .last()
            .map(|l| l.out_shape[0])
            .unwrap_or_else(|| {
                self.branches
                    .iter()
                    .map(|b| b.layers.last().map_or(0, |l| l.out_shape[0]))
                    .sum()
            })
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.branches
            .iter()
            .flat_map(|b| &b.layers)
            .chain(&self.trunk)
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers().find(|l| l.name == name)
    }

    pub fn branch(&self, name: &str) -> Option<&Branch> {
        self.branches.iter().find(|b| b.name == name)
    }

    /// Kernel then bias of each parameterised layer, in layer order.
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers()
            .filter(|l| l.spec.has_params())
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.branches
            .iter_mut()
            .flat_map(|b| b.layers.iter_mut())
            .chain(self.trunk.iter_mut())
            .filter(|l| l.spec.has_params())
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Trace, NnError> {
        if input.shape != self.spec.input_shape {
            return Err(NnError::Shape(format!(
                "input shape {:?} does not match graph input {:?}",
                input.shape, self.spec.input_shape
            )));
        }
        let mut branches = Vec::with_capacity(self.branches.len());
        let mut concat = Vec::new();
        for b in &self.branches {
            let mut outs: Vec<Tensor> = Vec::with_capacity(b.layers.len());
            for l in &b.layers {
                let x = outs.last().unwrap_or(input);
                outs.push(l.forward(x));
            }
            concat.extend_from_slice(&outs.last().unwrap_or(input).data);
            branches.push(outs);
        }
        let concat = Tensor::vector(concat);
        let mut trunk: Vec<Tensor> = Vec::with_capacity(self.trunk.len());
        for l in &self.trunk {
            let x = trunk.last().unwrap_or(&concat);
            trunk.push(l.forward(x));
        }
        let trace = Trace {
            branches,
            concat,
            trunk,
        };
        if trace.logits().iter().any(|v| !v.is_finite()) {
            return Err(NnError::Numeric("non-finite network output".into()));
        }
        Ok(trace)
    }

    /// Head-activated outputs of a forward pass.
    pub fn predict(&self, input: &Tensor) -> Result<Vec<f64>, NnError> {
        Ok(activate(self.forward(input)?.logits(), self.spec.head))
    }

    /// Reverse pass from `dlogits`. Activation gradients are kept when
    /// `keep_act_grads`; the network input gradient is never formed.
    pub fn backward(
        &self,
        input: &Tensor,
        trace: &Trace,
        dlogits: &[f64],
        keep_act_grads: bool,
    ) -> (Grads, Option<ActGrads>) {
        let mut grads = Grads::zeros_like(self);
        let mut slot = grads.params.len();
        let mut d = Tensor::vector(dlogits.to_vec());
        let mut trunk_grads = Vec::new();

        let mut step =
            |l: &Layer, x: &Tensor, y: &Tensor, d: &Tensor, need_dx: bool, slot: &mut usize| {
                let (mut dw, mut db) = (Vec::new(), Vec::new());
                if l.spec.has_params() {
                    *slot -= 2;
                    dw = std::mem::take(&mut grads.params[*slot]);
                    db = std::mem::take(&mut grads.params[*slot + 1]);
                }
                let dx = l.backward(x, y, d, need_dx, &mut dw, &mut db);
                if l.spec.has_params() {
                    grads.params[*slot] = dw;
                    grads.params[*slot + 1] = db;
                }
                dx
            };

        for (i, l) in self.trunk.iter().enumerate().rev() {
            let x = if i == 0 {
                &trace.concat
            } else {
                &trace.trunk[i - 1]
            };
            if keep_act_grads {
                trunk_grads.push(d.clone());
            }
            d = step(l, x, &trace.trunk[i], &d, true, &mut slot).expect("trunk input gradient");
        }
        trunk_grads.reverse();

        let mut offsets = Vec::with_capacity(self.branches.len());
        let mut off = 0;
        for b in &self.branches {
            offsets.push(off);
            off += b.layers.last().map_or(input.len(), |l| l.out_shape[0]);
        }
        let mut branch_grads = vec![Vec::new(); self.branches.len()];
        for (bi, b) in self.branches.iter().enumerate().rev() {
            let n = b.layers.last().map_or(input.len(), |l| l.out_shape[0]);
            let mut db = Tensor::vector(d.data[offsets[bi]..offsets[bi] + n].to_vec());
            let outs = &trace.branches[bi];
            let mut kept = Vec::new();
            for (i, l) in b.layers.iter().enumerate().rev() {
                if keep_act_grads {
                    kept.push(db.clone());
                }
                let x = if i == 0 { input } else { &outs[i - 1] };
                match step(l, x, &outs[i], &db, i > 0, &mut slot) {
                    Some(dx) => db = dx,
                    None => break,
                }
            }
            kept.reverse();
            branch_grads[bi] = kept;
        }
        let acts = keep_act_grads.then_some(ActGrads {
            branches: branch_grads,
            trunk: trunk_grads,
        });
        (grads, acts)
    }
}
