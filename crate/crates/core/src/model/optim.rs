use serde::{Deserialize, Serialize};

use super::ModelParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(crate::Error::InvalidArgument(format!("unknown optimizer {other:?}"))),
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Plain SGD or Adam over every tensor of a [`ModelParams`].
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &ModelParams) -> Self {
        let moments = || match kind {
            OptimizerKind::Adam => params.tensors().iter().map(|m| vec![0.0; m.data().len()]).collect(),
            OptimizerKind::Sgd => Vec::new(),
        };
        Optimizer {
            kind,
            learning_rate,
            step: 0,
            first: moments(),
            second: moments(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let bc1 = 1.0 - BETA1.powi(self.step as i32);
                let bc2 = 1.0 - BETA2.powi(self.step as i32);
                let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
                for ((p, g), (m, v)) in tensors.zip(self.first.iter_mut().zip(self.second.iter_mut())) {
                    for (((w, &d), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = BETA1 * *mi + (1.0 - BETA1) * d;
                        *vi = BETA2 * *vi + (1.0 - BETA2) * d * d;
                        *w -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + EPSILON);
                    }
                }
            }
        }
    }
}

pub fn global_norm(grads: &ModelParams) -> f64 {
    grads.tensors().iter().map(|m| m.sum_sq()).sum::<f64>().sqrt()
}

/// Rescales `grads` so its global L2 norm is at most `clip_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut ModelParams, clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    norm
}
