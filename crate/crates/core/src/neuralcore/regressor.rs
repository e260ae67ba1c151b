use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{one_hot, sigmoid, Dense, Optimizer, Parameters, RnnCache, RnnCell};
use crate::error::{NasError, Result};

/// Recurrent accuracy surrogate: reads a token string and emits a value
/// in `(0, 1)`.
///
/// Each step's input is a one-hot token concatenated with a one-hot
/// position, which lets small datasets pin per-position effects quickly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRegressor {
    pub vocab: usize,
    pub max_len: usize,
    pub cell: RnnCell,
    pub head: Dense,
}

/// Outcome of one [`fit_regressor`] call.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub mse_before: f64,
    pub mse_after: f64,
    pub learning_rate: f64,
    pub retries: u32,
}

/// Retries with a halved learning rate when fitting makes the MSE worse.
pub const MAX_FIT_RETRIES: u32 = 3;

impl AccuracyRegressor {
    pub fn new<R: Rng + ?Sized>(vocab: usize, max_len: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if vocab == 0 || max_len == 0 || hidden == 0 {
            return Err(NasError::Config(
                "regressor vocab, max_len and hidden must be positive".into(),
            ));
        }
        Ok(Self {
            vocab,
            max_len,
            cell: RnnCell::new(vocab + max_len, hidden, rng),
            head: Dense::new(hidden, 1, rng),
        })
    }

    fn inputs(&self, tokens: &[usize]) -> Result<Vec<Vec<f64>>> {
        if tokens.len() > self.max_len {
            return Err(NasError::Config(format!(
                "sequence of length {} exceeds regressor max_len {}",
                tokens.len(),
                self.max_len
            )));
        }
        tokens
            .iter()
            .enumerate()
            .map(|(pos, &t)| {
                if t >= self.vocab {
                    return Err(NasError::Config(format!(
                        "token {t} outside regressor vocabulary of size {}",
                        self.vocab
                    )));
                }
                let mut x = one_hot(self.vocab, t);
                x.extend(one_hot(self.max_len, pos));
                Ok(x)
            })
            .collect()
    }

    /// Returns the cache, the pre-squash output and the prediction.
    pub fn forward_sequence(&self, tokens: &[usize]) -> Result<(RnnCache, f64, f64)> {
        let cache = self.cell.forward(self.inputs(tokens)?);
        let z = self.head.forward(cache.last())[0];
        Ok((cache, z, sigmoid(z)))
    }

    pub fn predict(&self, tokens: &[usize]) -> Result<f64> {
        Ok(self.forward_sequence(tokens)?.2)
    }

    /// Accumulates the gradient of `scale · (ŷ − target)²` into `grads`.
    pub fn backward(&self, cache: &RnnCache, y: f64, target: f64, scale: f64, grads: &mut Self) {
        let dz = scale * 2.0 * (y - target) * y * (1.0 - y);
        let dh = self.head.backward(cache.last(), &[dz], &mut grads.head);
        let steps = cache.inputs.len();
        if steps == 0 {
            return;
        }
        let mut dhs = vec![vec![0.0; dh.len()]; steps];
        dhs[steps - 1] = dh;
        self.cell.backward(cache, &dhs, &mut grads.cell);
    }

    pub fn mse(&self, data: &[(Vec<usize>, f64)]) -> Result<f64> {
        let mut total = 0.0;
        for (tokens, target) in data {
            total += (self.predict(tokens)? - target).powi(2);
        }
        Ok(total / data.len() as f64)
    }

    /// Mean-squared-error gradient over the whole dataset.
    pub fn batch_gradient(&self, data: &[(Vec<usize>, f64)]) -> Result<Self> {
        let mut grads = self.zeroed();
        let scale = 1.0 / data.len() as f64;
        for (tokens, target) in data {
            let (cache, _, y) = self.forward_sequence(tokens)?;
            self.backward(&cache, y, *target, scale, &mut grads);
        }
        Ok(grads)
    }
}

impl Parameters for AccuracyRegressor {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.cell.visit(f);
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.cell.visit_mut(f);
        self.head.visit_mut(f);
    }
}

/// Full-batch training for `epochs` steps.
///
/// If the MSE ends higher than it started, parameters and optimizer state
/// are restored and training reruns at half the learning rate, up to
/// [`MAX_FIT_RETRIES`] times. When every attempt fails the original model
/// is kept, so the training MSE never increases.
pub fn fit_regressor(
    regressor: &mut AccuracyRegressor,
    data: &[(Vec<usize>, f64)],
    epochs: usize,
    optimizer: &mut Optimizer,
) -> Result<FitReport> {
    if data.is_empty() {
        return Err(NasError::Data("cannot fit the regressor on an empty dataset".into()));
    }
    let mse_before = regressor.mse(data)?;
    let original_model = regressor.clone();
    let original_opt = optimizer.clone();
    let base_lr = optimizer.config.learning_rate;

    for retry in 0..=MAX_FIT_RETRIES {
        let lr = base_lr / f64::from(1u32 << retry);
        let mut model = original_model.clone();
        let mut opt = original_opt.clone();
        opt.set_learning_rate(lr);
        for _ in 0..epochs {
            let grads = model.batch_gradient(data)?;
            opt.step(&mut model, &grads);
        }
        let mse_after = model.mse(data)?;
        if model.all_finite() && mse_after <= mse_before {
            *regressor = model;
            opt.set_learning_rate(base_lr);
            *optimizer = opt;
            return Ok(FitReport {
                mse_before,
                mse_after,
                learning_rate: lr,
                retries: retry,
            });
        }
        log::debug!("regressor fit raised mse {mse_before:.5} -> {mse_after:.5} at lr {lr}; backing off");
    }
    Ok(FitReport {
        mse_before,
        mse_after: mse_before,
        learning_rate: base_lr,
        retries: MAX_FIT_RETRIES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::{MicroSpace, SearchSpace};
    use crate::evaluator::{Evaluator, FidelityConfig, SyntheticConfig, SyntheticOracle};
    use crate::neuralcore::gradcheck::max_rel_error;
    use crate::neuralcore::OptimizerConfig;
    use crate::stats::spearman;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reg(seed: u64) -> AccuracyRegressor {
        AccuracyRegressor::new(8, 6, 12, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn output_in_open_unit_interval() {
        let r = reg(0);
        for seq in [vec![], vec![0], vec![1, 5, 2, 7, 0, 3]] {
            let y = r.predict(&seq).unwrap();
            assert!(y > 0.0 && y < 1.0);
        }
        assert!(r.predict(&[8]).is_err());
        assert!(r.predict(&[0; 7]).is_err());
    }

    #[test]
    fn regression_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let mut r = reg(seed);
            r.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v *= 6.0));
            let tokens = [3, 1, 4, 1, 5];
            let target = 0.37;
            let (cache, _, y) = r.forward_sequence(&tokens).unwrap();
            let mut g = r.zeroed();
            r.backward(&cache, y, target, 1.0, &mut g);
            let loss = |m: &AccuracyRegressor| (m.predict(&tokens).unwrap() - target).powi(2);
            let err = max_rel_error(&r, &g, loss, 1e-5);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn matched_target_is_stationary() {
        let r = reg(3);
        let tokens = [2, 0, 6];
        let (cache, _, y) = r.forward_sequence(&tokens).unwrap();
        let mut g = r.zeroed();
        r.backward(&cache, y, y, 1.0, &mut g);
        let norm = g.flatten().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-10);
    }

    #[test]
    fn loss_scale_is_linear() {
        let r = reg(4);
        let (cache, _, y) = r.forward_sequence(&[1, 2]).unwrap();
        let mut g1 = r.zeroed();
        let mut g2 = r.zeroed();
        r.backward(&cache, y, 0.9, 1.0, &mut g1);
        r.backward(&cache, y, 0.9, 2.0, &mut g2);
        for (a, b) in g1.flatten().iter().zip(&g2.flatten()) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut r = reg(0);
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.01));
        assert!(fit_regressor(&mut r, &[], 10, &mut opt).is_err());
    }

    #[test]
    fn single_point_interpolation() {
        let mut r = reg(5);
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.05));
        let data = vec![(vec![1, 3, 2], 0.83)];
        let rep = fit_regressor(&mut r, &data, 300, &mut opt).unwrap();
        assert!(rep.mse_after <= rep.mse_before);
        assert!((r.predict(&[1, 3, 2]).unwrap() - 0.83).abs() < 1e-2);
    }

    #[test]
    fn constant_target_decreases_monotonically() {
        let mut r = reg(6);
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.05, 0.0));
        let data: Vec<(Vec<usize>, f64)> = (0..8)
            .map(|i| (vec![i % 8, (i * 3) % 8], 0.7))
            .collect();
        let mut last = r.mse(&data).unwrap();
        for _ in 0..30 {
            let rep = fit_regressor(&mut r, &data, 5, &mut opt).unwrap();
            assert!(rep.mse_after <= last + 1e-15);
            last = rep.mse_after;
        }
        for (tokens, _) in &data {
            assert!((r.predict(tokens).unwrap() - 0.7).abs() < 0.1);
        }
    }

    #[test]
    fn never_increases_training_mse() {
        // A huge learning rate forces the backoff path.
        let mut r = reg(7);
        let mut opt = Optimizer::new(OptimizerConfig::sgd(500.0, 0.9));
        let data: Vec<(Vec<usize>, f64)> = (0..10)
            .map(|i| (vec![i % 8, (i * 5) % 8, (i * 7) % 8], (i as f64) / 10.0))
            .collect();
        let rep = fit_regressor(&mut r, &data, 20, &mut opt).unwrap();
        assert!(rep.mse_after <= rep.mse_before);
        assert!((r.mse(&data).unwrap() - rep.mse_after).abs() < 1e-15);
    }

    #[test]
    fn held_out_rank_correlation() {
        let micro = MicroSpace::default();
        let space = SearchSpace::Micro(micro.clone());
        let oracle = SyntheticOracle::new(SyntheticConfig::new(11), &space).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let fid = FidelityConfig::default();
        let mut seen = std::collections::HashSet::new();
        let mut data = Vec::new();
        while data.len() < 200 {
            let depth = rng.random_range(1..=micro.max_layers);
            let spec = micro.sample_layers(depth, &mut rng);
            if seen.insert(spec.key()) {
                let acc = oracle.evaluate(&spec, &fid).unwrap();
                data.push((spec.tokens, acc));
            }
        }
        let (train, test) = data.split_at(160);
        let mut r = AccuracyRegressor::new(micro.vocab_size(), micro.max_layers, 24, &mut rng).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.01));
        fit_regressor(&mut r, train, 600, &mut opt).unwrap();
        let pred: Vec<f64> = test.iter().map(|(t, _)| r.predict(t).unwrap()).collect();
        let truth: Vec<f64> = test.iter().map(|(_, a)| *a).collect();
        let rho = spearman(&pred, &truth).unwrap();
        assert!(rho >= 0.6, "held-out spearman {rho}");
    }
}
