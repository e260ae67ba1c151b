use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{one_hot, softmax, Dense, Optimizer, Parameters, RnnCache, RnnCell};
use crate::error::{NasError, Result};

/// Recurrent controller emitting one categorical action per slot.
///
/// Step `t` reads a one-hot of the previous action (or a start token at
/// `t = 0`) and projects the hidden state through slot `t`'s head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNetwork {
    pub slot_cards: Vec<usize>,
    pub cell: RnnCell,
    pub heads: Vec<Dense>,
    /// Softmax temperature; logits are divided by it before sampling.
    #[serde(default = "unit")]
    pub temperature: f64,
}

fn unit() -> f64 {
    1.0
}

/// Outputs and activations from a teacher-forced pass.
#[derive(Clone, Debug)]
pub struct PolicyForward {
    pub cache: RnnCache,
    pub probs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub actions: Vec<usize>,
    pub reward: f64,
}

impl PolicyNetwork {
    pub fn new<R: Rng + ?Sized>(slot_cards: Vec<usize>, hidden: usize, rng: &mut R) -> Result<Self> {
        if slot_cards.is_empty() || slot_cards.contains(&0) || hidden == 0 {
            return Err(NasError::Config(
                "policy needs at least one slot, non-empty vocabularies and hidden > 0".into(),
            ));
        }
        let input = 1 + slot_cards.iter().sum::<usize>();
        let cell = RnnCell::new(input, hidden, rng);
        let heads = slot_cards
            .iter()
            .map(|&c| Dense::new(hidden, c, rng))
            .collect();
        Ok(Self {
            slot_cards,
            cell,
            heads,
            temperature: 1.0,
        })
    }

    fn probs_at(&self, slot: usize, h: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self.heads[slot]
            .forward(h)
            .iter()
            .map(|v| v / self.temperature)
            .collect();
        softmax(&z)
    }

    pub fn num_slots(&self) -> usize {
        self.slot_cards.len()
    }

    fn input_for(&self, step: usize, prev: Option<usize>) -> Vec<f64> {
        let dim = self.cell.input_size();
        match prev {
            None => one_hot(dim, 0),
            Some(a) => {
                let offset: usize = self.slot_cards[..step - 1].iter().sum();
                one_hot(dim, 1 + offset + a)
            }
        }
    }

    fn check_actions(&self, actions: &[usize]) -> Result<()> {
        if actions.len() > self.num_slots() {
            return Err(NasError::Config(format!(
                "{} actions for a {}-slot policy",
                actions.len(),
                self.num_slots()
            )));
        }
        for (t, (&a, &c)) in actions.iter().zip(&self.slot_cards).enumerate() {
            if a >= c {
                return Err(NasError::Config(format!(
                    "action {a} at slot {t} outside vocabulary of size {c}"
                )));
            }
        }
        Ok(())
    }

    /// Teacher-forced pass over `actions`.
    pub fn forward_sequence(&self, actions: &[usize]) -> Result<PolicyForward> {
        self.check_actions(actions)?;
        let mut cache = self.cell.initial_cache();
        let mut probs = Vec::with_capacity(actions.len());
        for t in 0..actions.len() {
            let prev = t.checked_sub(1).map(|p| actions[p]);
            self.cell.push(&mut cache, self.input_for(t, prev));
            probs.push(self.probs_at(t, cache.last()));
        }
        Ok(PolicyForward { cache, probs })
    }

    /// Per-slot action distributions, conditioned on `actions` so far.
    pub fn distribution(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut seq = prefix.to_vec();
        if seq.len() >= self.num_slots() {
            return Err(NasError::Config("prefix already covers every slot".into()));
        }
        seq.push(0);
        let fwd = self.forward_sequence(&seq)?;
        Ok(fwd.probs.last().cloned().unwrap_or_default())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut cache = self.cell.initial_cache();
        let mut actions = Vec::with_capacity(self.num_slots());
        for t in 0..self.num_slots() {
            let prev = actions.last().copied();
            self.cell.push(&mut cache, self.input_for(t, prev));
            let p = self.probs_at(t, cache.last());
            actions.push(sample_categorical(&p, rng));
        }
        actions
    }

    pub fn log_prob(&self, actions: &[usize]) -> Result<f64> {
        let fwd = self.forward_sequence(actions)?;
        Ok(actions
            .iter()
            .zip(&fwd.probs)
            .map(|(&a, p)| p[a].ln())
            .sum())
    }

    /// Gradient of `−scale · Σ_t log π(a_t)`.
    pub fn backward(&self, fwd: &PolicyForward, actions: &[usize], scale: f64) -> Self {
        let mut grads = self.zeroed();
        let mut dh = Vec::with_capacity(actions.len());
        for (t, &a) in actions.iter().enumerate() {
            // d(−log softmax_a)/dz = p − onehot(a), then through z / T
            let mut dz = fwd.probs[t].clone();
            dz[a] -= 1.0;
            dz.iter_mut().for_each(|v| *v *= scale / self.temperature);
            dh.push(self.heads[t].backward(&fwd.cache.hidden[t + 1], &dz, &mut grads.heads[t]));
        }
        self.cell.backward(&fwd.cache, &dh, &mut grads.cell);
        grads
    }
}

impl Parameters for PolicyNetwork {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.cell.visit(f);
        for h in &self.heads {
            h.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.cell.visit_mut(f);
        for h in &mut self.heads {
            h.visit_mut(f);
        }
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Exponential moving average of rewards, seeded by the first reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub decay: f64,
    pub value: Option<f64>,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Self { decay, value: None }
    }

    /// Returns `reward − b` using the current baseline, then folds the
    /// reward into the average.
    pub fn advantage(&mut self, reward: f64) -> f64 {
        let b = self.value.unwrap_or(reward);
        self.value = Some(self.decay * b + (1.0 - self.decay) * reward);
        reward - b
    }
}

/// One REINFORCE step; returns the advantage used.
///
/// A zero advantage leaves parameters and optimizer state untouched.
pub fn reinforce_update(
    policy: &mut PolicyNetwork,
    episode: &Episode,
    baseline: &mut Baseline,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    let adv = baseline.advantage(episode.reward);
    if adv == 0.0 {
        return Ok(0.0);
    }
    let fwd = policy.forward_sequence(&episode.actions)?;
    let grads = policy.backward(&fwd, &episode.actions, adv);
    optimizer.step(policy, &grads);
    Ok(adv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::gradcheck::max_rel_error;
    use crate::neuralcore::{Matrix, OptimizerConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(cards: Vec<usize>, hidden: usize, seed: u64) -> PolicyNetwork {
        PolicyNetwork::new(cards, hidden, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_policy() {
        let mut p = policy(vec![4, 3], 5, 0);
        p.visit_mut(&mut |s| s.fill(0.0));
        let fwd = p.forward_sequence(&[2, 1]).unwrap();
        assert!(fwd.cache.hidden.iter().flatten().all(|&h| h == 0.0));
        assert!(fwd.probs[0].iter().all(|&q| (q - 0.25).abs() < 1e-15));
        assert!(fwd.probs[1].iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn single_step_tanh_by_hand() {
        let cell = RnnCell {
            w_x: Matrix::from_rows(&[vec![0.5]]),
            w_h: Matrix::zeros(1, 1),
            b: vec![0.0],
        };
        let cache = cell.forward(vec![vec![1.0]]);
        assert!((cache.hidden[1][0] - 0.462117).abs() < 1e-6);
    }

    #[test]
    fn deterministic_and_validated() {
        let p = policy(vec![3, 3, 2], 6, 4);
        let a = p.forward_sequence(&[1, 2, 0]).unwrap();
        let b = p.forward_sequence(&[1, 2, 0]).unwrap();
        assert_eq!(a.probs, b.probs);
        assert!(p.forward_sequence(&[3]).is_err());
        assert!(p.forward_sequence(&[0, 0, 0, 0]).is_err());
        for q in &a.probs {
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(q.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let mut p = policy(vec![3, 4, 2], 5, seed);
            p.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v *= 8.0));
            let actions = [2, 0, 1];
            let fwd = p.forward_sequence(&actions).unwrap();
            let g = p.backward(&fwd, &actions, 0.7);
            let err = max_rel_error(&p, &g, |q| -0.7 * q.log_prob(&actions).unwrap(), 1e-5);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn tempered_gradient_matches_finite_differences() {
        let mut p = policy(vec![4, 3], 5, 8);
        p.temperature = 0.6;
        let actions = [3, 1];
        let fwd = p.forward_sequence(&actions).unwrap();
        let g = p.backward(&fwd, &actions, 1.3);
        let err = max_rel_error(&p, &g, |q| -1.3 * q.log_prob(&actions).unwrap(), 1e-5);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn gradient_is_linear_in_scale() {
        let p = policy(vec![3, 2], 4, 9);
        let fwd = p.forward_sequence(&[1, 1]).unwrap();
        let g1 = p.backward(&fwd, &[1, 1], 1.0).flatten();
        let g2 = p.backward(&fwd, &[1, 1], 2.0).flatten();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn positive_advantage_raises_taken_action() {
        let mut p = policy(vec![2], 4, 1);
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1, 0.0));
        let mut base = Baseline {
            decay: 0.9,
            value: Some(0.2),
        };
        let before = p.distribution(&[]).unwrap()[1];
        let adv = reinforce_update(&mut p, &Episode { actions: vec![1], reward: 1.0 }, &mut base, &mut opt).unwrap();
        assert!(adv > 0.0);
        assert!(p.distribution(&[]).unwrap()[1] > before);
        assert!((base.value.unwrap() - 0.28).abs() < 1e-12);
    }

    #[test]
    fn centered_reward_is_a_no_op() {
        let mut p = policy(vec![3, 3], 4, 2);
        let before = p.clone();
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1));
        let mut base = Baseline::new(0.9);
        // First reward seeds the baseline, so the advantage is zero.
        let adv = reinforce_update(&mut p, &Episode { actions: vec![0, 2], reward: 0.5 }, &mut base, &mut opt).unwrap();
        assert_eq!(adv, 0.0);
        assert_eq!(p, before);
        base.value = Some(0.3);
        let adv = reinforce_update(&mut p, &Episode { actions: vec![1, 1], reward: 0.3 }, &mut base, &mut opt).unwrap();
        assert_eq!(adv, 0.0);
        assert_eq!(p, before);
    }

    #[test]
    fn ten_arm_bandit_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut p = PolicyNetwork::new(vec![10], 8, &mut rng).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.05));
        let mut base = Baseline::new(0.9);
        let best = 7;
        for _ in 0..2000 {
            let actions = p.sample(&mut rng);
            let reward = if actions[0] == best { 1.0 } else { 0.1 };
            reinforce_update(&mut p, &Episode { actions, reward }, &mut base, &mut opt).unwrap();
        }
        let prob = p.distribution(&[]).unwrap()[best];
        assert!(prob > 0.9, "best-arm probability {prob}");
    }

    #[test]
    fn equal_seeds_equal_trajectories() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut p = PolicyNetwork::new(vec![3, 4], 6, &mut rng).unwrap();
            let mut opt = Optimizer::new(OptimizerConfig::adam(0.02));
            let mut base = Baseline::new(0.9);
            for _ in 0..50 {
                let actions = p.sample(&mut rng);
                let reward = actions.iter().sum::<usize>() as f64 / 5.0;
                reinforce_update(&mut p, &Episode { actions, reward }, &mut base, &mut opt).unwrap();
            }
            p.flatten()
        };
        assert_eq!(run(), run());
    }
}
