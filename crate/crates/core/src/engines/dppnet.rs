use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalContext, Phase, SearchOutcome, SearchTrace, TraceRecord};
use crate::archspace::{ArchSpec, MicroSpace, SearchSpace};
use crate::costmodel::MetricVector;
use crate::error::{NasError, Result};
use crate::evaluator::{Evaluator, FidelityConfig};
use crate::neuralcore::{fit_regressor, AccuracyRegressor, Optimizer, OptimizerConfig};
use crate::pareto::{select_k, ObjectiveSpec};

/// Progressive cell search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppNetConfig {
    /// Candidates kept (and truly evaluated) per generation.
    pub k: usize,
    /// Training epochs per evaluation; defaults to the run's fidelity.
    #[serde(default)]
    pub train_epochs: Option<u32>,
    /// Stop depth; defaults to the space's `max_layers`.
    #[serde(default)]
    pub max_layers: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Full-batch surrogate epochs per refit.
    #[serde(default = "default_fit_epochs")]
    pub fit_epochs: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerConfig,
}

fn default_hidden() -> usize {
    32
}
fn default_fit_epochs() -> usize {
    300
}
fn default_optimizer() -> OptimizerConfig {
    OptimizerConfig::adam(0.01)
}

impl DppNetConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            train_epochs: None,
            max_layers: None,
            hidden: default_hidden(),
            fit_epochs: default_fit_epochs(),
            optimizer: default_optimizer(),
        }
    }

    pub fn check(&self, space: &MicroSpace, fidelity: &FidelityConfig) -> Result<()> {
        if self.k == 0 {
            return Err(NasError::Config("dppnet.k must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(NasError::Config("dppnet.hidden must be at least 1".into()));
        }
        if let Some(n) = self.train_epochs {
            FidelityConfig {
                proxy_epochs: n,
                full_epochs: fidelity.full_epochs,
            }
            .check()?;
        }
        if let Some(l) = self.max_layers {
            if l == 0 || l > space.max_layers {
                return Err(NasError::Config(format!(
                    "dppnet.max_layers must be in 1..={}, got {l}",
                    space.max_layers
                )));
            }
        }
        self.optimizer.check()
    }

    fn fidelity(&self, base: &FidelityConfig) -> FidelityConfig {
        match self.train_epochs {
            Some(n) => FidelityConfig {
                proxy_epochs: n,
                full_epochs: base.full_epochs,
            },
            None => *base,
        }
    }
}

/// Bookkeeping for one generation (generation 0 is the 1-layer seed set).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStat {
    pub generation: usize,
    pub layer_count: usize,
    /// K': candidates produced by extending the survivors.
    pub candidates: usize,
    pub selected: Vec<String>,
    /// Surrogate training-set size after this generation's refit.
    pub dataset_size: usize,
    pub fit_mse: Option<f64>,
}

/// Accuracy predictor consulted before any true evaluation.
pub trait Predictor {
    fn predict(&self, specs: &[ArchSpec]) -> Result<Vec<f64>>;
    /// Refit on every (spec, accuracy) pair seen so far. Returns the
    /// training MSE when meaningful.
    fn fit(&mut self, data: &[(ArchSpec, f64)]) -> Result<Option<f64>>;
}

/// Recurrent regressor over cell tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePredictor {
    pub regressor: AccuracyRegressor,
    pub optimizer: Optimizer,
    pub fit_epochs: usize,
}

impl SurrogatePredictor {
    pub fn new(space: &MicroSpace, config: &DppNetConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            regressor: AccuracyRegressor::new(space.vocab_size(), space.max_layers, config.hidden, rng)?,
            optimizer: Optimizer::new(config.optimizer),
            fit_epochs: config.fit_epochs,
        })
    }
}

impl Predictor for SurrogatePredictor {
    fn predict(&self, specs: &[ArchSpec]) -> Result<Vec<f64>> {
        specs.iter().map(|s| self.regressor.predict(&s.tokens)).collect()
    }

    fn fit(&mut self, data: &[(ArchSpec, f64)]) -> Result<Option<f64>> {
        let pairs: Vec<(Vec<usize>, f64)> = data.iter().map(|(s, a)| (s.tokens.clone(), *a)).collect();
        let report = fit_regressor(&mut self.regressor, &pairs, self.fit_epochs, &mut self.optimizer)?;
        Ok(Some(report.mse_after))
    }
}

/// Perfect-knowledge predictor: the evaluator's noise-free accuracy,
/// queried without charging the budget. Used to check the selection logic
/// in isolation from surrogate error.
pub struct OraclePredictor<'a> {
    pub evaluator: &'a dyn Evaluator,
    pub fidelity: FidelityConfig,
}

impl Predictor for OraclePredictor<'_> {
    fn predict(&self, specs: &[ArchSpec]) -> Result<Vec<f64>> {
        specs
            .iter()
            .map(|s| self.evaluator.evaluate_noise_free(s, &self.fidelity))
            .collect()
    }

    fn fit(&mut self, _data: &[(ArchSpec, f64)]) -> Result<Option<f64>> {
        Ok(None)
    }
}

fn micro(space: &SearchSpace) -> Result<&MicroSpace> {
    match space {
        SearchSpace::Micro(m) => Ok(m),
        SearchSpace::Macro(_) => Err(NasError::Config(
            "progressive search needs a micro (cell) space".into(),
        )),
    }
}

/// Progressive search with the learned surrogate.
pub fn run_dppnet(
    config: &DppNetConfig,
    ctx: &EvalContext,
    objectives: &ObjectiveSpec,
    seed: u64,
) -> Result<SearchOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut predictor = SurrogatePredictor::new(micro(ctx.space())?, config, &mut rng)?;
    run_dppnet_with(config, ctx, objectives, &mut predictor, &mut rng)
}

/// Progressive search with a caller-supplied predictor and generator.
///
/// 1. Seed: evaluate every 1-layer cell, fit the predictor, keep K.
/// 2. Each generation: extend the K survivors by one layer (K'
///    candidates), predict their accuracy, select K by Pareto rank over
///    predicted error plus exact costs, evaluate those, refit.
/// 3. Stop at the depth limit or when nothing can be extended.
pub fn run_dppnet_with(
    config: &DppNetConfig,
    ctx: &EvalContext,
    objectives: &ObjectiveSpec,
    predictor: &mut dyn Predictor,
    rng: &mut ChaCha8Rng,
) -> Result<SearchOutcome> {
    let space = micro(ctx.space())?;
    config.check(space, &ctx.fidelity)?;
    let fidelity = config.fidelity(&ctx.fidelity);
    let depth_limit = config.max_layers.unwrap_or(space.max_layers);

    let mut trace = SearchTrace::new();
    let mut dataset: Vec<(ArchSpec, f64)> = Vec::new();
    let mut generations = Vec::new();
    let mut predictions = 0;

    let mut seeds = space.enumerate_extensions(&ArchSpec::empty_micro())?;
    seeds.sort_by_key(ArchSpec::key);
    let measured = ctx.measure_all(&seeds, &fidelity)?;
    for (spec, m) in seeds.iter().zip(&measured) {
        trace.push(TraceRecord::new(0, spec.key(), m, m.accuracy, Phase::Init));
        dataset.push((spec.clone(), m.accuracy));
    }
    let fit_mse = predictor.fit(&dataset)?;
    let points: Vec<Vec<f64>> = measured.iter().map(|m| objectives.point(m)).collect();
    let mut survivors: Vec<ArchSpec> = select_k(&points, config.k, rng)
        .into_iter()
        .map(|i| seeds[i].clone())
        .collect();
    generations.push(GenerationStat {
        generation: 0,
        layer_count: 1,
        candidates: seeds.len(),
        selected: survivors.iter().map(ArchSpec::key).collect(),
        dataset_size: dataset.len(),
        fit_mse,
    });

    let mut generation = 0;
    while survivors.first().is_some_and(|s| s.layer_count() < depth_limit) {
        generation += 1;
        let mut pool = Vec::new();
        for s in &survivors {
            pool.extend(space.enumerate_extensions(s)?);
        }
        if pool.is_empty() {
            break;
        }
        pool.sort_by_key(ArchSpec::key);

        let predicted = predictor.predict(&pool)?;
        predictions += pool.len();
        let mut points = Vec::with_capacity(pool.len());
        for (spec, &acc) in pool.iter().zip(&predicted) {
            let m = MetricVector::new(acc.clamp(0.0, 1.0), &ctx.estimate(spec)?);
            points.push(objectives.point(&m));
            trace.push(TraceRecord::new(generation, spec.key(), &m, acc, Phase::Predict));
        }

        let chosen: Vec<ArchSpec> = select_k(&points, config.k, rng)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect();
        let measured = ctx.measure_all(&chosen, &fidelity)?;
        for (spec, m) in chosen.iter().zip(&measured) {
            trace.push(TraceRecord::new(generation, spec.key(), m, m.accuracy, Phase::Evaluate));
            dataset.push((spec.clone(), m.accuracy));
        }
        let fit_mse = predictor.fit(&dataset)?;
        log::debug!(
            "generation {generation}: {} candidates, {} selected, dataset {}",
            pool.len(),
            chosen.len(),
            dataset.len()
        );
        generations.push(GenerationStat {
            generation,
            layer_count: chosen[0].layer_count(),
            candidates: pool.len(),
            selected: chosen.iter().map(ArchSpec::key).collect(),
            dataset_size: dataset.len(),
            fit_mse,
        });
        survivors = chosen;
    }

    Ok(SearchOutcome {
        front: trace.front(objectives),
        evaluations: trace.evaluated_count(),
        predictions,
        trace,
        generations,
    })
}

/// Layer-wise greedy brute force: at each depth keep the single best
/// extension by noise-free accuracy (first in token order on ties).
pub fn greedy_oracle(
    space: &MicroSpace,
    evaluator: &dyn Evaluator,
    fidelity: &FidelityConfig,
    max_layers: usize,
) -> Result<ArchSpec> {
    let mut current = ArchSpec::empty_micro();
    while current.layer_count() < max_layers {
        let mut best: Option<(f64, ArchSpec)> = None;
        for ext in space.enumerate_extensions(&current)? {
            let acc = evaluator.evaluate_noise_free(&ext, fidelity)?;
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, ext));
            }
        }
        match best {
            Some((_, spec)) => current = spec,
            None => break,
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::MicroSpace;
    use crate::costmodel::{CostModel, DeviceProfile, InputShape};
    use crate::evaluator::{SyntheticConfig, SyntheticOracle};
    use crate::pareto::Objective;

    fn four_conv_space() -> MicroSpace {
        let mut m = MicroSpace::default();
        m.conv_ops.truncate(4);
        m.max_layers = 4;
        m
    }

    struct Fixture {
        oracle: SyntheticOracle,
        costs: CostModel,
        profile: DeviceProfile,
    }

    fn fixture(m: MicroSpace, seed: u64) -> Fixture {
        let s = SearchSpace::Micro(m);
        Fixture {
            oracle: SyntheticOracle::new(SyntheticConfig::new(seed), &s).unwrap(),
            costs: CostModel::new(s, InputShape::default()),
            profile: DeviceProfile::embedded(),
        }
    }

    #[test]
    fn candidate_counts_and_dataset_growth() {
        let m = four_conv_space();
        assert_eq!(m.conv_ops.len(), 4);
        let f = fixture(m.clone(), 1);
        let ctx = EvalContext::new(&f.oracle, &f.costs, &f.profile, FidelityConfig::default());
        let mut cfg = DppNetConfig::new(3);
        cfg.fit_epochs = 20;
        let out = run_dppnet(&cfg, &ctx, &ObjectiveSpec::device(false), 5).unwrap();
        let seeds = m.norm_ops.len();
        assert_eq!(out.generations[0].candidates, seeds);
        assert_eq!(out.generations[0].dataset_size, seeds);
        for g in &out.generations[1..] {
            let survivors = out.generations[g.generation - 1].selected.len();
            let vocab = m.slot_cardinality(g.layer_count - 1);
            assert_eq!(g.candidates, survivors * vocab);
            assert_eq!(g.dataset_size, seeds + g.generation * cfg.k);
            let predicted = out
                .trace
                .records
                .iter()
                .filter(|r| r.phase == Phase::Predict && r.iteration == g.generation)
                .count();
            assert_eq!(predicted, g.candidates);
        }
        // Norm -> Conv step: 2 survivors x 4 convs; Conv -> Norm: 3 x 2.
        assert_eq!(out.generations[1].candidates, 8);
        assert_eq!(out.generations[2].candidates, 6);
        assert_eq!(out.generations.last().unwrap().layer_count, 4);
        assert_eq!(ctx.evaluations(), out.evaluations);
        assert_eq!(out.evaluations, seeds + 3 * cfg.k);
    }

    #[test]
    fn twelve_candidates_from_three_survivors() {
        // conv vocabulary 4, K = 3: extending three Norm-ending cells.
        let m = four_conv_space();
        let f = fixture(m, 2);
        let ctx = EvalContext::new(&f.oracle, &f.costs, &f.profile, FidelityConfig::default());
        let mut cfg = DppNetConfig::new(3);
        cfg.fit_epochs = 20;
        let out = run_dppnet(&cfg, &ctx, &ObjectiveSpec::device(false), 9).unwrap();
        // generation 3 extends three 3-layer (Norm-ending) cells with convs.
        assert_eq!(out.generations[3].candidates, 12);
    }

    #[test]
    fn k1_accuracy_only_is_greedy() {
        for seed in 0..5 {
            let m = MicroSpace::default();
            let f = fixture(m.clone(), 30 + seed);
            let ctx = EvalContext::new(&f.oracle, &f.costs, &f.profile, FidelityConfig::default());
            let fid = FidelityConfig::default();
            let mut predictor = OraclePredictor {
                evaluator: &f.oracle,
                fidelity: fid,
            };
            let objectives = ObjectiveSpec::new(vec![Objective::maximize("accuracy")]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = run_dppnet_with(&DppNetConfig::new(1), &ctx, &objectives, &mut predictor, &mut rng).unwrap();
            let last = &out.generations.last().unwrap().selected;
            let greedy = greedy_oracle(&m, &f.oracle, &fid, m.max_layers).unwrap();
            assert_eq!(last, &vec![greedy.key()]);
        }
    }

    #[test]
    fn rejects_macro_space_and_bad_config() {
        let s = SearchSpace::Macro(Default::default());
        let oracle = SyntheticOracle::new(SyntheticConfig::new(1), &s).unwrap();
        let costs = CostModel::new(s, InputShape::default());
        let p = DeviceProfile::workstation();
        let ctx = EvalContext::new(&oracle, &costs, &p, FidelityConfig::default());
        assert!(run_dppnet(&DppNetConfig::new(2), &ctx, &ObjectiveSpec::accuracy_energy(), 1).is_err());
        let m = MicroSpace::default();
        assert!(DppNetConfig::new(0).check(&m, &FidelityConfig::default()).is_err());
        let mut c = DppNetConfig::new(1);
        c.max_layers = Some(99);
        assert!(c.check(&m, &FidelityConfig::default()).is_err());
    }

    #[test]
    fn deterministic_across_workers() {
        let m = MicroSpace {
            conv_ops: MicroSpace::default().conv_ops[..2].to_vec(),
            ..MicroSpace::default()
        };
        let f = fixture(m, 4);
        let obj = ObjectiveSpec::device(true);
        let mut cfg = DppNetConfig::new(4);
        cfg.fit_epochs = 30;
        let a = {
            let ctx = EvalContext::new(&f.oracle, &f.costs, &f.profile, FidelityConfig::default());
            run_dppnet(&cfg, &ctx, &obj, 3).unwrap()
        };
        let b = {
            let ctx = EvalContext::new(&f.oracle, &f.costs, &f.profile, FidelityConfig::default())
                .with_workers(4)
                .unwrap();
            run_dppnet(&cfg, &ctx, &obj, 3).unwrap()
        };
        assert_eq!(a.trace.to_csv_string().unwrap(), b.trace.to_csv_string().unwrap());
    }
}
