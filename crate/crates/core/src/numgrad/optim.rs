use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A named trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }

    /// Adds the gradient recorded for `var`, if any, into `self.grad`.
    pub fn accumulate(&mut self, grads: &Gradients, var: Var) {
        if let Some(g) = grads.get(var) {
            self.grad.add_scaled(g, 1.0);
        }
    }
}

pub fn zero_grads(params: &mut [Parameter]) {
    params.iter_mut().for_each(Parameter::zero_grad);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AdamW,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Coupled L2 penalty for `sgd`/`adam`, decoupled decay for `adamw`.
    pub weight_decay: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(0.001)
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.0,
            epsilon: 1e-8,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            ..Self::sgd(learning_rate)
        }
    }

    /// AdamW with the default decoupled weight decay of 0.01.
    pub fn adamw(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::AdamW,
            weight_decay: 0.01,
            ..Self::sgd(learning_rate)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.weight_decay >= 0.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Clone, Debug, Default)]
pub struct OptimizerState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Applies one update to every parameter from its accumulated gradient.
///
/// The gradients are left in place; callers zero them before the next batch.
pub fn step(
    params: &mut [Parameter],
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
) -> Result<()> {
    for p in params.iter() {
        p.grad.check_finite(&format!("gradient of {}", p.name))?;
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len() {
        return Err(Error::Config(format!(
            "optimizer state tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    state.step += 1;
    let lr = cfg.learning_rate;
    let wd = cfg.weight_decay;

    match cfg.kind {
        OptimizerKind::Sgd => {
            for p in params.iter_mut() {
                let Parameter { value, grad, .. } = p;
                for (x, g) in value.data_mut().iter_mut().zip(grad.data()) {
                    *x -= lr * (g + wd * *x);
                }
            }
        }
        OptimizerKind::Adam | OptimizerKind::AdamW => {
            let t = state.step as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            let decoupled = cfg.kind == OptimizerKind::AdamW;
            for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
                let Parameter { value, grad, .. } = p;
                for (((x, &g), m), v) in value
                    .data_mut()
                    .iter_mut()
                    .zip(grad.data())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    let g = if decoupled { g } else { g + wd * *x };
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
                    if decoupled {
                        *x -= lr * wd * *x;
                    }
                    *x -= lr * update;
                }
            }
        }
    }
    Ok(())
}
