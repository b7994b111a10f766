//! Dense double-precision tensors, reverse-mode gradients, finite-difference
//! verification and the SGD/Adam/AdamW optimizers.

mod gradcheck;
mod graph;
mod optim;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use graph::{sigmoid, Gradients, Graph, Var};
pub use optim::{step, zero_grads, OptimizerConfig, OptimizerKind, OptimizerState, Parameter};
pub use tensor::Tensor;

use crate::error::Result;

/// Softmax of a vector or of each row of a matrix.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    x.softmax()
}

pub fn relu(x: &Tensor) -> Tensor {
    x.relu()
}

/// `-log softmax(logits)[gold]` for a single row of logits.
pub fn cross_entropy(logits: &Tensor, gold: usize) -> Result<f64> {
    let mut g = Graph::new();
    let v = g.input(logits);
    let loss = g.cross_entropy(v, &[gold])?;
    Ok(g.value(loss).item())
}

/// Registers every parameter as a trainable leaf on `g`.
pub fn bind<'a>(g: &mut Graph<'a>, params: &'a [Parameter]) -> Vec<Var> {
    params.iter().map(|p| g.param(&p.value)).collect()
}

/// Registers every parameter as a frozen leaf on `g`.
pub fn bind_frozen<'a>(g: &mut Graph<'a>, params: &'a [Parameter]) -> Vec<Var> {
    params.iter().map(|p| g.input(&p.value)).collect()
}
