//! Small neural substrate with hand-written backpropagation.
//!
//! Just enough to drive the architecture controller (a recurrent policy
//! over hyperparameter slots) and the accuracy surrogate (a recurrent
//! regressor over cell tokens). Every model implements [`Parameters`], so
//! the optimizer, checkpointing and finite-difference checks all work on a
//! flat parameter vector.

mod layers;
mod optim;
mod policy;
mod regressor;

pub use layers::{Dense, RnnCache, RnnCell};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use policy::{reinforce_update, Baseline, Episode, PolicyForward, PolicyNetwork};
pub use regressor::{fit_regressor, AccuracyRegressor, FitReport};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NasError, Result};

/// Half-width of the uniform parameter initialization.
pub const INIT_SCALE: f64 = 0.08;

/// Checkpoint blob format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `y = M x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `y = Mᵀ x`
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (yc, a) in y.iter_mut().zip(row) {
                *yc += a * xr;
            }
        }
        y
    }

    /// `M += a bᵀ`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (m, &bc) in row.iter_mut().zip(b) {
                *m += ar * bc;
            }
        }
    }
}

/// Uniform access to a model's trainable parameters.
pub trait Parameters: Clone {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    fn load_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[at..at + s.len()]);
            at += s.len();
        });
        assert_eq!(at, flat.len(), "parameter count mismatch");
    }

    /// Same shape, all zeros; used as a gradient accumulator.
    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |s| s.fill(0.0));
        z
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |s| ok &= s.iter().all(|v| v.is_finite()));
        ok
    }
}

pub(crate) fn one_hot(len: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Versioned JSON blob holding one model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub format_version: u32,
    pub model: M,
}

impl<M: Serialize + for<'de> Deserialize<'de>> Checkpoint<M> {
    pub fn new(model: M) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(NasError::Data(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        Ok(ck)
    }
}
