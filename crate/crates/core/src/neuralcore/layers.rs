use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, Parameters, INIT_SCALE};

/// Fully connected layer `y = W x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            w: Matrix::uniform(outputs, inputs, INIT_SCALE, rng),
            b: (0..outputs)
                .map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE))
                .collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.w.matvec(x);
        for (yi, bi) in y.iter_mut().zip(&self.b) {
            *yi += bi;
        }
        y
    }

    /// Accumulates parameter gradients into `grads`; returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Dense) -> Vec<f64> {
        grads.w.add_outer(dy, x);
        for (g, d) in grads.b.iter_mut().zip(dy) {
            *g += d;
        }
        self.w.matvec_t(dy)
    }
}

impl Parameters for Dense {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.w.data);
        f(&self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.w.data);
        f(&mut self.b);
    }
}

/// Elman cell: `h' = tanh(W_x x + W_h h + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnCell {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Vec<f64>,
}

/// Activations kept for backpropagation through time.
#[derive(Clone, Debug, Default)]
pub struct RnnCache {
    pub inputs: Vec<Vec<f64>>,
    /// `hidden[0]` is the zero initial state; `hidden[t + 1]` follows step `t`.
    pub hidden: Vec<Vec<f64>>,
}

impl RnnCache {
    pub fn last(&self) -> &[f64] {
        self.hidden.last().expect("cache always holds the initial state")
    }
}

impl RnnCell {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_x: Matrix::uniform(hidden, inputs, INIT_SCALE, rng),
            w_h: Matrix::uniform(hidden, hidden, INIT_SCALE, rng),
            b: (0..hidden)
                .map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE))
                .collect(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.b.len()
    }

    pub fn input_size(&self) -> usize {
        self.w_x.cols
    }

    pub fn initial_cache(&self) -> RnnCache {
        RnnCache {
            inputs: Vec::new(),
            hidden: vec![vec![0.0; self.hidden_size()]],
        }
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let a = self.w_x.matvec(x);
        let r = self.w_h.matvec(h);
        a.iter()
            .zip(&r)
            .zip(&self.b)
            .map(|((a, r), b)| (a + r + b).tanh())
            .collect()
    }

    /// Runs one step and records it in `cache`.
    pub fn push(&self, cache: &mut RnnCache, x: Vec<f64>) {
        let h = self.step(&x, cache.last());
        cache.inputs.push(x);
        cache.hidden.push(h);
    }

    pub fn forward(&self, inputs: Vec<Vec<f64>>) -> RnnCache {
        let mut cache = self.initial_cache();
        for x in inputs {
            self.push(&mut cache, x);
        }
        cache
    }

    /// Backpropagation through time.
    ///
    /// `dh[t]` is the loss gradient flowing into `hidden[t + 1]` from
    /// outside the recurrence (e.g. an output head).
    pub fn backward(&self, cache: &RnnCache, dh: &[Vec<f64>], grads: &mut RnnCell) {
        let steps = cache.inputs.len();
        debug_assert_eq!(dh.len(), steps);
        let mut carry = vec![0.0; self.hidden_size()];
        for t in (0..steps).rev() {
            let h = &cache.hidden[t + 1];
            let da: Vec<f64> = dh[t]
                .iter()
                .zip(&carry)
                .zip(h)
                .map(|((d, c), h)| (d + c) * (1.0 - h * h))
                .collect();
            grads.w_x.add_outer(&da, &cache.inputs[t]);
            grads.w_h.add_outer(&da, &cache.hidden[t]);
            for (g, d) in grads.b.iter_mut().zip(&da) {
                *g += d;
            }
            carry = self.w_h.matvec_t(&da);
        }
    }
}

impl Parameters for RnnCell {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.w_x.data);
        f(&self.w_h.data);
        f(&self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.w_x.data);
        f(&mut self.w_h.data);
        f(&mut self.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::gradcheck::max_rel_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = RnnCell::new(7, 5, &mut rng);
        assert!(cell.flatten().iter().all(|v| v.abs() <= INIT_SCALE));
        assert_eq!(cell.num_params(), 5 * 7 + 5 * 5 + 5);
    }

    #[test]
    fn dense_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Dense::new(4, 3, &mut rng);
        let x = [0.3, -1.2, 0.5, 2.0];
        let target = [0.1, -0.4, 0.9];
        let loss = |d: &Dense| {
            d.forward(&x)
                .iter()
                .zip(&target)
                .map(|(y, t)| 0.5 * (y - t).powi(2))
                .sum::<f64>()
        };
        let y = layer.forward(&x);
        let dy: Vec<f64> = y.iter().zip(&target).map(|(y, t)| y - t).collect();
        let mut g = layer.zeroed();
        layer.backward(&x, &dy, &mut g);
        assert!(max_rel_error(&layer, &g, loss, 1e-6) < 1e-4);
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cell = RnnCell::new(3, 4, &mut rng);
        // Larger weights so tanh saturation is exercised.
        cell.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v *= 10.0));
        let inputs = vec![
            vec![1.0, 0.0, 0.5],
            vec![0.0, -1.0, 0.2],
            vec![0.3, 0.3, 0.3],
            vec![-0.7, 0.1, 0.0],
        ];
        // Loss = sum over steps of c_t · h_t.
        let coeffs: Vec<Vec<f64>> = (0..4)
            .map(|t| (0..4).map(|j| ((t * 4 + j) as f64 * 0.37).sin()).collect())
            .collect();
        let loss = |c: &RnnCell| {
            let cache = c.forward(inputs.clone());
            (0..4)
                .map(|t| {
                    cache.hidden[t + 1]
                        .iter()
                        .zip(&coeffs[t])
                        .map(|(h, k)| h * k)
                        .sum::<f64>()
                })
                .sum::<f64>()
        };
        let cache = cell.forward(inputs.clone());
        let mut g = cell.zeroed();
        cell.backward(&cache, &coeffs, &mut g);
        let err = max_rel_error(&cell, &g, loss, 1e-6);
        assert!(err < 1e-4, "relative error {err}");
    }
}
