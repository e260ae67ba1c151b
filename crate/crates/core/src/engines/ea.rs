use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::random::draw;
use super::{EvalContext, Phase, SearchOutcome, SearchTrace, TraceRecord};
use crate::archspace::ArchSpec;
use crate::error::{NasError, Result};
use crate::pareto::ObjectiveSpec;
use crate::reward::RewardConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eviction {
    /// Drop the lowest-fitness individual (oldest among ties).
    #[default]
    Worst,
    /// Drop the oldest individual (aging evolution).
    Oldest,
}

/// Tournament-selection evolutionary baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EaConfig {
    /// Total true evaluations, initial population included.
    pub budget: usize,
    pub population_size: usize,
    pub tournament_size: usize,
    /// Probability that a child gets one slot resampled.
    #[serde(default = "default_mutation_rate")]
    pub mutation_rate: f64,
    #[serde(default)]
    pub eviction: Eviction,
}

fn default_mutation_rate() -> f64 {
    1.0
}

impl EaConfig {
    pub fn new(budget: usize, population_size: usize, tournament_size: usize) -> Self {
        Self {
            budget,
            population_size,
            tournament_size,
            mutation_rate: default_mutation_rate(),
            eviction: Eviction::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.tournament_size < 2 || self.population_size < self.tournament_size {
            return Err(NasError::Config(format!(
                "ea needs population_size ({}) >= tournament_size ({}) >= 2",
                self.population_size, self.tournament_size
            )));
        }
        if self.budget < self.population_size {
            return Err(NasError::Config(format!(
                "ea.budget ({}) must cover the initial population ({})",
                self.budget, self.population_size
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(NasError::Config(format!(
                "ea.mutation_rate must be in [0, 1], got {}",
                self.mutation_rate
            )));
        }
        Ok(())
    }
}

struct Individual {
    spec: ArchSpec,
    fitness: f64,
    born: usize,
}

pub fn run_ea(
    config: &EaConfig,
    reward: &RewardConfig,
    ctx: &EvalContext,
    objectives: &ObjectiveSpec,
    seed: u64,
) -> Result<SearchOutcome> {
    config.check()?;
    reward.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = SearchTrace::new();

    let specs = draw(ctx, config.population_size, &mut rng);
    let metrics = ctx.measure_all(&specs, &ctx.fidelity)?;
    let mut population = Vec::with_capacity(config.population_size + 1);
    for (i, (spec, m)) in specs.into_iter().zip(&metrics).enumerate() {
        let fitness = reward.reward(m, ctx.profile)?;
        trace.push(TraceRecord::new(i + 1, spec.key(), m, fitness, Phase::Init));
        population.push(Individual {
            spec,
            fitness,
            born: i + 1,
        });
    }

    let num_slots = ctx.space().num_slots();
    for step in config.population_size + 1..=config.budget {
        let contestants = sample(&mut rng, population.len(), config.tournament_size);
        let winner = contestants
            .iter()
            .max_by(|&a, &b| {
                population[a]
                    .fitness
                    .total_cmp(&population[b].fitness)
                    .then(population[b].born.cmp(&population[a].born))
            })
            .expect("tournament is non-empty");
        let parent = &population[winner].spec;
        let child = if rng.random_bool(config.mutation_rate) {
            let slot = rng.random_range(0..num_slots);
            ctx.space().mutate_slot(parent, slot, &mut rng)
        } else {
            parent.clone()
        };
        let m = ctx.measure(&child)?;
        let fitness = reward.reward(&m, ctx.profile)?;
        trace.push(TraceRecord::new(step, child.key(), &m, fitness, Phase::Child));
        population.push(Individual {
            spec: child,
            fitness,
            born: step,
        });

        let evict = match config.eviction {
            Eviction::Worst => population
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| a.fitness.total_cmp(&b.fitness).then(a.born.cmp(&b.born)))
                .map(|(i, _)| i),
            Eviction::Oldest => population
                .iter()
                .enumerate()
                .min_by_key(|(_, ind)| ind.born)
                .map(|(i, _)| i),
        }
        .expect("population is non-empty");
        population.remove(evict);
    }

    Ok(SearchOutcome {
        front: trace.front(objectives),
        evaluations: trace.evaluated_count(),
        predictions: 0,
        trace,
        generations: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::{MacroSpace, SearchSpace};
    use crate::costmodel::{CostModel, DeviceProfile, InputShape};
    use crate::engines::{run_random, RandomConfig};
    use crate::evaluator::{FidelityConfig, SyntheticConfig, SyntheticOracle};

    struct Fixture {
        oracle: SyntheticOracle,
        costs: CostModel,
        profile: DeviceProfile,
    }

    fn fixture() -> Fixture {
        let s = SearchSpace::Macro(MacroSpace::default());
        Fixture {
            oracle: SyntheticOracle::new(SyntheticConfig::new(8), &s).unwrap(),
            costs: CostModel::new(s, InputShape::default()),
            profile: DeviceProfile::workstation(),
        }
    }

    const ACC: RewardConfig = RewardConfig::Mixed { alpha: 1.0 };

    #[test]
    fn validation() {
        assert!(EaConfig::new(10, 5, 1).check().is_err());
        assert!(EaConfig::new(10, 3, 4).check().is_err());
        assert!(EaConfig::new(2, 3, 2).check().is_err());
        assert!(EaConfig::new(10, 3, 2).check().is_ok());
    }

    #[test]
    fn no_mutation_copies_parent_and_never_worsens() {
        let f = fixture();
        let ctx = EvalContext::new(&f.oracle, &f.costs, &f.profile, FidelityConfig::default());
        let mut cfg = EaConfig::new(60, 10, 3);
        cfg.mutation_rate = 0.0;
        let out = run_ea(&cfg, &ACC, &ctx, &ObjectiveSpec::accuracy_energy(), 4).unwrap();
        assert_eq!(ctx.evaluations(), 60);
        let init: Vec<&TraceRecord> = out.trace.records.iter().take(10).collect();
        // Every child is a copy of some earlier individual.
        for (i, r) in out.trace.records.iter().enumerate().skip(10) {
            assert!(out.trace.records[..i].iter().any(|p| p.arch == r.arch));
        }
        // Replay the population to check its minimum fitness never drops.
        let mut pop: Vec<f64> = init.iter().map(|r| r.reward).collect();
        let mut floor = pop.iter().cloned().fold(f64::INFINITY, f64::min);
        for r in out.trace.records.iter().skip(10) {
            pop.push(r.reward);
            let worst = pop
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            pop.remove(worst);
            let m = pop.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(m >= floor);
            floor = m;
        }
    }

    #[test]
    fn full_tournament_picks_global_best() {
        let f = fixture();
        let ctx = EvalContext::new(&f.oracle, &f.costs, &f.profile, FidelityConfig::default());
        let mut cfg = EaConfig::new(11, 10, 10);
        cfg.mutation_rate = 0.0;
        let out = run_ea(&cfg, &ACC, &ctx, &ObjectiveSpec::accuracy_energy(), 6).unwrap();
        let best = out.trace.records[..10]
            .iter()
            .max_by(|a, b| a.reward.total_cmp(&b.reward))
            .unwrap();
        assert_eq!(out.trace.records[10].arch, best.arch);
    }

    #[test]
    fn population_only_budget_matches_random_search() {
        let f = fixture();
        let obj = ObjectiveSpec::accuracy_energy();
        let ctx = EvalContext::new(&f.oracle, &f.costs, &f.profile, FidelityConfig::default());
        let ea = run_ea(&EaConfig::new(12, 12, 4), &ACC, &ctx, &obj, 77).unwrap();
        let rs = run_random(&RandomConfig { budget: 12 }, &ACC, &ctx, &obj, 77).unwrap();
        assert_eq!(ea.front, rs.front);
        let archs = |o: &SearchOutcome| o.trace.records.iter().map(|r| r.arch.clone()).collect::<Vec<_>>();
        assert_eq!(archs(&ea), archs(&rs));
    }

    #[test]
    fn deterministic_across_workers() {
        let f = fixture();
        let obj = ObjectiveSpec::accuracy_energy();
        let cfg = EaConfig::new(40, 8, 3);
        let one = EvalContext::new(&f.oracle, &f.costs, &f.profile, FidelityConfig::default());
        let four = EvalContext::new(&f.oracle, &f.costs, &f.profile, FidelityConfig::default())
            .with_workers(4)
            .unwrap();
        let a = run_ea(&cfg, &ACC, &one, &obj, 1).unwrap();
        let b = run_ea(&cfg, &ACC, &four, &obj, 1).unwrap();
        assert_eq!(a.trace.to_csv_string().unwrap(), b.trace.to_csv_string().unwrap());
    }
}
