//! Accuracy backends.
//!
//! [`SyntheticOracle`] stands in for training: a logistic score over one-hot
//! token features and normalized depth, scaled by a linear epoch ramp, plus
//! noise derived from a hash of `(oracle seed, architecture key)` so repeated
//! evaluation of a spec is stable. [`TabularBenchmark`] looks accuracies up
//! in a JSON Lines table. Engines only see the [`Evaluator`] trait.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archspace::{ArchSpec, SearchSpace, SpaceKind};
use crate::costmodel::{CostModel, DeviceProfile, MetricVector};
use crate::error::{NasError, Result};
use crate::pareto::{ObjectiveSpec, ParetoFront};

/// Default enumeration limit for exhaustive ground truth.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Training budget of an evaluation; accuracy ramps linearly with epochs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityConfig {
    pub proxy_epochs: u32,
    pub full_epochs: u32,
}

impl FidelityConfig {
    pub fn full(epochs: u32) -> Self {
        Self {
            proxy_epochs: epochs,
            full_epochs: epochs,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.proxy_epochs == 0 || self.full_epochs < self.proxy_epochs {
            return Err(NasError::Config(format!(
                "fidelity needs 1 <= proxy_epochs ({}) <= full_epochs ({})",
                self.proxy_epochs, self.full_epochs
            )));
        }
        Ok(())
    }

    pub fn ramp(&self) -> f64 {
        f64::from(self.proxy_epochs) / f64::from(self.full_epochs)
    }

    /// The same schedule at full training length.
    pub fn at_full(&self) -> Self {
        Self::full(self.full_epochs)
    }
}

impl Default for FidelityConfig {
    fn default() -> Self {
        Self::full(1)
    }
}

pub trait Evaluator: Send + Sync {
    /// Validation accuracy in `[0, 1]`.
    fn evaluate(&self, spec: &ArchSpec, fidelity: &FidelityConfig) -> Result<f64>;

    /// Accuracy with any evaluation noise switched off.
    fn evaluate_noise_free(&self, spec: &ArchSpec, fidelity: &FidelityConfig) -> Result<f64> {
        self.evaluate(spec, fidelity)
    }
}

/// Wraps an evaluator and counts true evaluation calls.
pub struct CountingEvaluator<'a> {
    inner: &'a dyn Evaluator,
    calls: AtomicUsize,
}

impl<'a> CountingEvaluator<'a> {
    pub fn new(inner: &'a dyn Evaluator) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Evaluator for CountingEvaluator<'_> {
    fn evaluate(&self, spec: &ArchSpec, fidelity: &FidelityConfig) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate(spec, fidelity)
    }

    fn evaluate_noise_free(&self, spec: &ArchSpec, fidelity: &FidelityConfig) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate_noise_free(spec, fidelity)
    }
}

fn default_max_accuracy() -> f64 {
    0.95
}
fn default_weight_std() -> f64 {
    0.5
}
fn default_coupling() -> f64 {
    1.0
}
fn default_depth_weight() -> f64 {
    0.5
}
fn default_interaction_scale() -> f64 {
    0.1
}

/// Parameters of the synthetic oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "default_max_accuracy")]
    pub max_accuracy: f64,
    /// Spread of the random per-choice preference weights.
    #[serde(default = "default_weight_std")]
    pub weight_std: f64,
    /// How strongly larger choices (more parameters) raise accuracy.
    #[serde(default = "default_coupling")]
    pub capacity_coupling: f64,
    #[serde(default = "default_depth_weight")]
    pub depth_weight: f64,
    #[serde(default)]
    pub bias: f64,
    /// Rank of the optional quadratic interaction term; 0 disables it.
    #[serde(default)]
    pub interaction_rank: usize,
    #[serde(default = "default_interaction_scale")]
    pub interaction_scale: f64,
    /// Explicit per-slot weights; generated from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
}

impl SyntheticConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            noise_std: 0.0,
            max_accuracy: default_max_accuracy(),
            weight_std: default_weight_std(),
            capacity_coupling: default_coupling(),
            depth_weight: default_depth_weight(),
            bias: 0.0,
            interaction_rank: 0,
            interaction_scale: default_interaction_scale(),
            weights: None,
        }
    }
}

/// Deterministic stand-in for training and validating a child network.
#[derive(Clone, Debug)]
pub struct SyntheticOracle {
    config: SyntheticConfig,
    space: SearchSpace,
    /// `weights[slot][choice]`, choice local to the slot's vocabulary.
    weights: Vec<Vec<f64>>,
    /// `interactions[r][slot][choice]`.
    interactions: Vec<Vec<Vec<f64>>>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SyntheticOracle {
    pub fn new(config: SyntheticConfig, space: &SearchSpace) -> Result<Self> {
        if !(config.max_accuracy > 0.0 && config.max_accuracy <= 1.0) {
            return Err(NasError::Config(format!(
                "max_accuracy must be in (0, 1], got {}",
                config.max_accuracy
            )));
        }
        if !(config.noise_std >= 0.0 && config.noise_std.is_finite()) {
            return Err(NasError::Config("noise_std must be finite and >= 0".into()));
        }
        if !(config.weight_std >= 0.0 && config.weight_std.is_finite()) {
            return Err(NasError::Config("weight_std must be finite and >= 0".into()));
        }
        let cards = space.slot_cardinalities();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let weights = match &config.weights {
            Some(w) => {
                let shape_ok = w.len() == cards.len() && w.iter().zip(&cards).all(|(r, &c)| r.len() == c);
                if !shape_ok {
                    return Err(NasError::Config(format!(
                        "synthetic weights must have shape {cards:?}"
                    )));
                }
                w.clone()
            }
            None => {
                let noise = Normal::new(0.0, config.weight_std)
                    .map_err(|e| NasError::Config(e.to_string()))?;
                space
                    .capacity_scores()
                    .into_iter()
                    .map(|slot| {
                        slot.into_iter()
                            .map(|c| {
                                config.capacity_coupling * (2.0 * c - 1.0) + noise.sample(&mut rng)
                            })
                            .collect()
                    })
                    .collect()
            }
        };
        let interactions = (0..config.interaction_rank)
            .map(|_| {
                cards
                    .iter()
                    .map(|&c| {
                        (0..c)
                            .map(|_| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                z / (cards.len() as f64).sqrt()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            config,
            space: space.clone(),
            weights,
            interactions,
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    fn local_choices(&self, spec: &ArchSpec) -> Vec<usize> {
        spec.tokens
            .iter()
            .enumerate()
            .map(|(slot, &t)| t - self.space.slot_tokens(slot).start)
            .collect()
    }

    /// Score before the logistic squashing.
    pub fn logit(&self, spec: &ArchSpec) -> Result<f64> {
        self.space.ensure_valid(spec)?;
        let choices = self.local_choices(spec);
        let mut z = self.config.bias;
        for (slot, &c) in choices.iter().enumerate() {
            z += self.weights[slot][c];
        }
        let depth = match spec.kind {
            SpaceKind::Macro => 1.0,
            SpaceKind::Micro => spec.tokens.len() as f64 / self.space.num_slots() as f64,
        };
        z += self.config.depth_weight * depth;
        for u in &self.interactions {
            let proj: f64 = choices.iter().enumerate().map(|(s, &c)| u[s][c]).sum();
            z += self.config.interaction_scale * proj * proj;
        }
        Ok(z)
    }

    /// Accuracy before noise: `max_accuracy * σ(logit) * ramp`.
    pub fn pre_noise(&self, spec: &ArchSpec, fidelity: &FidelityConfig) -> Result<f64> {
        Ok(self.config.max_accuracy * logistic(self.logit(spec)?) * fidelity.ramp())
    }

    fn noise(&self, spec: &ArchSpec) -> f64 {
        if self.config.noise_std == 0.0 {
            return 0.0;
        }
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(spec.key().as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let z: f64 = StandardNormal.sample(&mut ChaCha8Rng::from_seed(seed));
        z * self.config.noise_std
    }
}

impl Evaluator for SyntheticOracle {
    fn evaluate(&self, spec: &ArchSpec, fidelity: &FidelityConfig) -> Result<f64> {
        Ok((self.pre_noise(spec, fidelity)? + self.noise(spec)).clamp(0.0, 1.0))
    }

    fn evaluate_noise_free(&self, spec: &ArchSpec, fidelity: &FidelityConfig) -> Result<f64> {
        Ok(self.pre_noise(spec, fidelity)?.clamp(0.0, 1.0))
    }
}

/// One benchmark row; only `arch` and `accuracy` are required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularEntry {
    pub arch: String,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flops: Option<u64>,
}

/// Precomputed accuracies keyed by architecture encoding.
#[derive(Clone, Debug)]
pub struct TabularBenchmark {
    entries: HashMap<String, TabularEntry>,
    coverage: f64,
}

impl TabularBenchmark {
    pub fn from_entries(entries: Vec<TabularEntry>, space: &SearchSpace) -> Result<Self> {
        let mut map = HashMap::with_capacity(entries.len());
        for (line, e) in entries.into_iter().enumerate() {
            let spec = space.decode(&e.arch).map_err(|err| {
                NasError::Data(format!("benchmark row {}: {err}", line + 1))
            })?;
            if !(0.0..=1.0).contains(&e.accuracy) {
                return Err(NasError::Data(format!(
                    "benchmark row {}: accuracy {} outside [0, 1]",
                    line + 1,
                    e.accuracy
                )));
            }
            let key = spec.key();
            if map.contains_key(&key) {
                return Err(NasError::Data(format!(
                    "benchmark row {}: duplicate architecture {key}",
                    line + 1
                )));
            }
            map.insert(key, e);
        }
        let total = space.stats()?.total_candidates;
        let coverage = if total == 0 {
            0.0
        } else {
            map.len() as f64 / total as f64
        };
        Ok(Self {
            entries: map,
            coverage,
        })
    }

    /// Loads JSON Lines; blank lines are skipped and unknown fields ignored.
    pub fn load(path: &Path, space: &SearchSpace) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| NasError::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| NasError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TabularEntry = serde_json::from_str(&line).map_err(|e| {
                NasError::Data(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            entries.push(entry);
        }
        Self::from_entries(entries, space)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fraction of the full-length space present in the table.
    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn get(&self, key: &str) -> Option<&TabularEntry> {
        self.entries.get(key)
    }
}

impl Evaluator for TabularBenchmark {
    fn evaluate(&self, spec: &ArchSpec, _fidelity: &FidelityConfig) -> Result<f64> {
        let key = spec.key();
        self.entries
            .get(&key)
            .map(|e| e.accuracy)
            .ok_or(NasError::NotInBenchmark(key))
    }
}

/// An exhaustively evaluated candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Measured {
    pub spec: ArchSpec,
    pub metrics: MetricVector,
}

/// Every full-length candidate of the space at full fidelity with noise
/// disabled, plus the exact Pareto front over them.
pub fn true_front(
    evaluator: &dyn Evaluator,
    costs: &CostModel,
    profile: &DeviceProfile,
    fidelity: &FidelityConfig,
    objectives: &ObjectiveSpec,
    limit: u128,
) -> Result<(Vec<Measured>, ParetoFront)> {
    let specs = costs.space.enumerate_all(limit)?;
    let full = fidelity.at_full();
    let measured = specs
        .into_iter()
        .map(|spec| {
            let acc = evaluator.evaluate_noise_free(&spec, &full)?;
            let metrics = MetricVector::new(acc, &costs.estimate(&spec, profile)?);
            Ok(Measured { spec, metrics })
        })
        .collect::<Result<Vec<_>>>()?;
    let keys: Vec<String> = measured.iter().map(|m| m.spec.key()).collect();
    let front = ParetoFront::extract(
        keys.iter()
            .map(String::as_str)
            .zip(measured.iter().map(|m| &m.metrics)),
        objectives,
    );
    Ok((measured, front))
}
