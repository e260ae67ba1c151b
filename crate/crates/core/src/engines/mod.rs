//! Search engines: policy-gradient controller, progressive SMBO, and the
//! random / evolutionary baselines.
//!
//! Every engine measures candidates through an [`EvalContext`], which owns
//! the evaluation budget counter and the optional worker pool. Batches are
//! evaluated with an order-preserving parallel map, so traces do not depend
//! on the worker count.

mod dppnet;
mod ea;
mod monas;
mod random;
mod trace;

pub use dppnet::{
    greedy_oracle, run_dppnet, run_dppnet_with, DppNetConfig, GenerationStat, OraclePredictor,
    Predictor, SurrogatePredictor,
};
pub use ea::{run_ea, EaConfig, Eviction};
pub use monas::{run_monas, MonasConfig, MonasState};
pub use random::{run_random, RandomConfig};
pub use trace::{satisfaction_rate, Phase, SearchTrace, TraceRecord, TRACE_COLUMNS};

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::archspace::{ArchSpec, SearchSpace};
use crate::costmodel::{CostEstimate, CostModel, DeviceProfile, MetricVector};
use crate::error::{NasError, Result};
use crate::evaluator::{Evaluator, FidelityConfig};
use crate::pareto::ParetoFront;

/// Everything an engine needs to turn an [`ArchSpec`] into a [`MetricVector`].
pub struct EvalContext<'a> {
    pub evaluator: &'a dyn Evaluator,
    pub costs: &'a CostModel,
    pub profile: &'a DeviceProfile,
    pub fidelity: FidelityConfig,
    pool: Option<rayon::ThreadPool>,
    calls: AtomicUsize,
}

impl<'a> EvalContext<'a> {
    pub fn new(
        evaluator: &'a dyn Evaluator,
        costs: &'a CostModel,
        profile: &'a DeviceProfile,
        fidelity: FidelityConfig,
    ) -> Self {
        Self {
            evaluator,
            costs,
            profile,
            fidelity,
            pool: None,
            calls: AtomicUsize::new(0),
        }
    }

    /// Evaluates batches on `workers` threads (1 means inline).
    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(NasError::Config("workers must be at least 1".into()));
        }
        self.pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| NasError::Config(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn space(&self) -> &SearchSpace {
        &self.costs.space
    }

    /// True evaluator calls so far.
    pub fn evaluations(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Exact costs only; does not touch the budget.
    pub fn estimate(&self, spec: &ArchSpec) -> Result<CostEstimate> {
        self.costs.estimate(spec, self.profile)
    }

    pub fn measure(&self, spec: &ArchSpec) -> Result<MetricVector> {
        self.measure_at(spec, &self.fidelity)
    }

    pub fn measure_at(&self, spec: &ArchSpec, fidelity: &FidelityConfig) -> Result<MetricVector> {
        self.space().ensure_valid(spec)?;
        let cost = self.estimate(spec)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let acc = self.evaluator.evaluate(spec, fidelity)?;
        Ok(MetricVector::new(acc, &cost))
    }

    /// Measures a batch; output order matches input order.
    pub fn measure_all(&self, specs: &[ArchSpec], fidelity: &FidelityConfig) -> Result<Vec<MetricVector>> {
        match &self.pool {
            Some(pool) => pool.install(|| {
                specs
                    .par_iter()
                    .map(|s| self.measure_at(s, fidelity))
                    .collect()
            }),
            None => specs.iter().map(|s| self.measure_at(s, fidelity)).collect(),
        }
    }
}

/// Result of one engine run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub trace: SearchTrace,
    pub front: ParetoFront,
    /// True evaluator calls.
    pub evaluations: usize,
    /// Surrogate predictions (free).
    pub predictions: usize,
    /// Per-generation bookkeeping; progressive search only.
    pub generations: Vec<GenerationStat>,
}
