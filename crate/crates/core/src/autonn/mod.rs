//! Small deterministic tensor engine: layers, multi-branch graphs,
//! reverse-mode gradients, losses, initialisation and optimisation.

pub mod checkpoint;
mod graph;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use graph::{ActGrads, Branch, BranchSpec, Grads, GraphSpec, NetworkGraph, Trace};
pub use layers::{activate, sigmoid, softmax, Activation, Layer, LayerSpec};
pub use loss::{compute_loss, loss_and_grad, PROB_CLAMP};
pub use optim::{adam_step, he_normal_init, lr_at_step, OptimizerState, ScheduleConfig};
pub use tensor::Tensor;

use crate::labels::EncodingKind;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("loss error: {0}")]
    Loss(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Forward pass returning head-activated outputs and the cached trace.
pub fn network_eval(graph: &NetworkGraph, input: &Tensor) -> Result<(Vec<f64>, Trace), NnError> {
    let trace = graph.forward(input)?;
    Ok((activate(trace.logits(), graph.spec.head), trace))
}

/// Loss and parameter gradients for one example.
pub fn network_grad(
    graph: &NetworkGraph,
    input: &Tensor,
    target: &[f64],
    kind: EncodingKind,
    class_weight: f64,
) -> Result<(f64, Grads), NnError> {
    let trace = graph.forward(input)?;
    let (loss, dlogits) = loss_and_grad(kind, trace.logits(), target, class_weight)?;
    let (grads, _) = graph.backward(input, &trace, &dlogits, false);
    Ok((loss, grads))
}
