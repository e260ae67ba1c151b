use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalContext, Phase, SearchOutcome, SearchTrace, TraceRecord};
use crate::archspace::ArchSpec;
use crate::error::{NasError, Result};
use crate::pareto::ObjectiveSpec;
use crate::reward::RewardConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomConfig {
    pub budget: usize,
}

impl RandomConfig {
    pub fn check(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(NasError::Config("random.budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// `n` uniform samples drawn from `rng`. The evolutionary baseline seeds
/// its population with exactly this sequence.
pub(crate) fn draw(ctx: &EvalContext, n: usize, rng: &mut ChaCha8Rng) -> Vec<ArchSpec> {
    (0..n).map(|_| ctx.space().sample_uniform(rng)).collect()
}

/// Budget uniform samples, each fully evaluated. `reward` only fills the
/// trace's reward column.
pub fn run_random(
    config: &RandomConfig,
    reward: &RewardConfig,
    ctx: &EvalContext,
    objectives: &ObjectiveSpec,
    seed: u64,
) -> Result<SearchOutcome> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = draw(ctx, config.budget, &mut rng);
    let metrics = ctx.measure_all(&specs, &ctx.fidelity)?;
    let mut trace = SearchTrace::new();
    for (i, (spec, m)) in specs.iter().zip(&metrics).enumerate() {
        let r = reward.reward(m, ctx.profile)?;
        trace.push(TraceRecord::new(i + 1, spec.key(), m, r, Phase::Random));
    }
    Ok(SearchOutcome {
        front: trace.front(objectives),
        evaluations: trace.evaluated_count(),
        predictions: 0,
        trace,
        generations: Vec::new(),
    })
}
