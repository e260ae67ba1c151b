use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalContext, Phase, SearchOutcome, SearchTrace, TraceRecord};
use crate::archspace::{ArchSpec, SearchSpace};
use crate::error::{NasError, Result};
use crate::neuralcore::{reinforce_update, Baseline, Episode, Optimizer, OptimizerConfig, PolicyNetwork};
use crate::pareto::ObjectiveSpec;
use crate::reward::RewardConfig;

/// Policy-gradient controller settings. One child is sampled per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonasConfig {
    pub iterations: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_decay")]
    pub baseline_decay: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Write a resumable checkpoint every this many iterations (0: only at the end).
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn default_hidden() -> usize {
    32
}
fn default_optimizer() -> OptimizerConfig {
    OptimizerConfig::adam(0.005)
}
fn default_decay() -> f64 {
    0.9
}
fn default_temperature() -> f64 {
    1.0
}

impl MonasConfig {
    pub fn new(iterations: usize) -> Self {
        Self {
            iterations,
            hidden: default_hidden(),
            optimizer: default_optimizer(),
            baseline_decay: default_decay(),
            temperature: default_temperature(),
            checkpoint_every: 0,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(NasError::Config("monas.iterations must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(NasError::Config("monas.hidden must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(NasError::Config(format!(
                "monas.baseline_decay must be in [0, 1), got {}",
                self.baseline_decay
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(NasError::Config(format!(
                "monas.temperature must be positive, got {}",
                self.temperature
            )));
        }
        self.optimizer.check()
    }
}

/// Everything needed to continue a controller run bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonasState {
    pub format_version: u32,
    /// Completed iterations.
    pub iteration: usize,
    pub policy: PolicyNetwork,
    pub optimizer: Optimizer,
    pub baseline: Baseline,
    pub rng: ChaCha8Rng,
    pub trace: SearchTrace,
}

pub const MONAS_STATE_VERSION: u32 = 1;

impl MonasState {
    pub fn new(config: &MonasConfig, space: &SearchSpace, seed: u64) -> Result<Self> {
        config.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cards = space.slot_cardinalities();
        let mut policy = PolicyNetwork::new(cards, config.hidden, &mut rng)?;
        policy.temperature = config.temperature;
        Ok(Self {
            format_version: MONAS_STATE_VERSION,
            iteration: 0,
            policy,
            optimizer: Optimizer::new(config.optimizer),
            baseline: Baseline::new(config.baseline_decay),
            rng,
            trace: SearchTrace::new(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(text)?;
        if state.format_version != MONAS_STATE_VERSION {
            return Err(NasError::Data(format!(
                "checkpoint version {} is not supported (expected {MONAS_STATE_VERSION})",
                state.format_version
            )));
        }
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Sample, evaluate, reward, update.
    pub fn step(&mut self, reward: &RewardConfig, ctx: &EvalContext) -> Result<()> {
        let space = ctx.space();
        let actions = self.policy.sample(&mut self.rng);
        let tokens = actions
            .iter()
            .enumerate()
            .map(|(slot, &a)| space.slot_tokens(slot).start + a)
            .collect();
        let spec = ArchSpec::new(space.kind(), tokens);
        let metrics = ctx.measure(&spec)?;
        let r = reward.reward(&metrics, ctx.profile)?;
        reinforce_update(
            &mut self.policy,
            &Episode { actions, reward: r },
            &mut self.baseline,
            &mut self.optimizer,
        )?;
        self.iteration += 1;
        self.trace.push(TraceRecord::new(
            self.iteration,
            spec.key(),
            &metrics,
            r,
            Phase::Sample,
        ));
        Ok(())
    }

    /// Runs up to `config.iterations`, calling `checkpoint` every
    /// `checkpoint_every` iterations.
    pub fn run<F>(&mut self, config: &MonasConfig, reward: &RewardConfig, ctx: &EvalContext, mut checkpoint: F) -> Result<()>
    where
        F: FnMut(&MonasState) -> Result<()>,
    {
        if self.policy.slot_cards != ctx.space().slot_cardinalities() {
            return Err(NasError::Config(
                "controller checkpoint does not match the search space".into(),
            ));
        }
        while self.iteration < config.iterations {
            self.step(reward, ctx)?;
            if config.checkpoint_every > 0 && self.iteration.is_multiple_of(config.checkpoint_every) {
                checkpoint(self)?;
            }
        }
        Ok(())
    }

    pub fn outcome(&self, objectives: &ObjectiveSpec) -> SearchOutcome {
        SearchOutcome {
            front: self.trace.front(objectives),
            evaluations: self.trace.evaluated_count(),
            predictions: 0,
            trace: self.trace.clone(),
            generations: Vec::new(),
        }
    }
}

pub fn run_monas(
    config: &MonasConfig,
    reward: &RewardConfig,
    ctx: &EvalContext,
    objectives: &ObjectiveSpec,
    seed: u64,
) -> Result<SearchOutcome> {
    reward.check()?;
    let mut state = MonasState::new(config, ctx.space(), seed)?;
    state.run(config, reward, ctx, |_| Ok(()))?;
    Ok(state.outcome(objectives))
}
