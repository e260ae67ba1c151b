use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{NasError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_eps(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    #[serde(default = "OptimizerKind::adam")]
    pub kind: OptimizerKind,
    /// Global gradient-norm clip; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub clip_norm: Option<f64>,
}

fn default_clip() -> Option<f64> {
    Some(5.0)
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            kind: OptimizerKind::adam(),
            clip_norm: default_clip(),
        }
    }

    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            kind: OptimizerKind::Sgd { momentum },
            clip_norm: default_clip(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NasError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(NasError::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        match self.kind {
            OptimizerKind::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => Err(
                NasError::Config(format!("momentum must be in [0, 1), got {momentum}")),
            ),
            OptimizerKind::Adam { beta1, beta2, .. }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) =>
            {
                Err(NasError::Config("adam betas must be in [0, 1)".into()))
            }
            _ => Ok(()),
        }
    }
}

/// First-order optimizer over a flat parameter vector.
///
/// The update is a pure function of (params, grads, state), so saving the
/// state alongside the parameters makes training resumable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// Scales `grads` in place so its L2 norm is at most `clip_norm`.
    pub fn clip(&self, grads: &mut [f64]) {
        if let Some(max) = self.config.clip_norm {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > max {
                let s = max / norm;
                grads.iter_mut().for_each(|g| *g *= s);
            }
        }
    }

    /// Gradient-descent step on raw slices.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        if self.m.len() != params.len() {
            self.m = vec![0.0; params.len()];
            self.v = vec![0.0; params.len()];
            self.t = 0;
        }
        let mut g = grads.to_vec();
        self.clip(&mut g);
        self.t += 1;
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd { momentum } => {
                for ((p, m), g) in params.iter_mut().zip(&mut self.m).zip(&g) {
                    *m = momentum * *m + g;
                    *p -= lr * *m;
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.t as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, m), v), g) in params
                    .iter_mut()
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                    .zip(&g)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                }
            }
        }
    }

    /// Applies `grads` (same shape as `model`) to `model`.
    pub fn step<M: Parameters>(&mut self, model: &mut M, grads: &M) {
        let mut p = model.flatten();
        self.step_flat(&mut p, &grads.flatten());
        model.load_flat(&p);
    }
}
