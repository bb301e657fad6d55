//! First-order optimizers over the encoder's flat parameter vectors.

use serde::{Deserialize, Serialize};

use super::{EncoderModel, ParamGrads};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state (first/second moment estimates for Adam).
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, model: &EncoderModel) -> Self {
        let n = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam { .. } => model.param_count(),
        };
        Optimizer { kind, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// Apply one update step: `theta -= lr * direction(grads)`.
    pub fn apply(&mut self, model: &mut EncoderModel, grads: &ParamGrads, lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (t, g) in model
                    .table
                    .iter_mut()
                    .chain(model.projection.iter_mut())
                    .zip(grads.table.iter().chain(grads.projection.iter()))
                {
                    *t -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.step += 1;
                let bc1 = 1.0 - beta1.powi(self.step as i32);
                let bc2 = 1.0 - beta2.powi(self.step as i32);
                for (i, (t, &g)) in model
                    .table
                    .iter_mut()
                    .chain(model.projection.iter_mut())
                    .zip(grads.table.iter().chain(grads.projection.iter()))
                    .enumerate()
                {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mhat = self.m[i] / bc1;
                    let vhat = self.v[i] / bc2;
                    *t -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}
