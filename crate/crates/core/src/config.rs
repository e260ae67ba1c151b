//! Run configuration: schema, validation, path resolution and dispatch.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archspace::SearchSpace;
use crate::costmodel::{CostModel, DeviceProfile, InputShape};
use crate::engines::{
    run_dppnet, run_ea, run_random, DppNetConfig, EaConfig, EvalContext, MonasConfig, MonasState,
    Phase, RandomConfig, SearchOutcome, SearchTrace, TraceRecord,
};
use crate::error::{NasError, Result};
use crate::evaluator::{
    true_front, Evaluator, FidelityConfig, SyntheticConfig, SyntheticOracle, TabularBenchmark,
};
use crate::pareto::{ObjectiveSpec, ParetoFront};
use crate::reward::RewardConfig;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluatorConfig {
    Synthetic(SyntheticConfig),
    /// JSON Lines benchmark file.
    Tabular { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    Preset(String),
    Path(PathBuf),
    Inline(DeviceProfile),
}

/// Exactly one engine per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineConfig {
    Monas(MonasConfig),
    Dppnet(DppNetConfig),
    Random(RandomConfig),
    Ea(EaConfig),
}

impl EngineConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EngineConfig::Monas(_) => "monas",
            EngineConfig::Dppnet(_) => "dppnet",
            EngineConfig::Random(_) => "random",
            EngineConfig::Ea(_) => "ea",
        }
    }
}

fn default_version() -> u32 {
    CONFIG_FORMAT_VERSION
}
fn default_profile() -> ProfileSource {
    ProfileSource::Preset("WS".into())
}
fn default_reward() -> RewardConfig {
    RewardConfig::Mixed { alpha: 1.0 }
}
fn default_workers() -> usize {
    1
}
fn default_window() -> usize {
    100
}

/// Everything needed to reproduce a run. Serializing a loaded config
/// materializes every default, which is what `config-echo.json` holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub format_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub space: SearchSpace,
    #[serde(default)]
    pub input: InputShape,
    pub evaluator: EvaluatorConfig,
    #[serde(default = "default_profile")]
    pub profile: ProfileSource,
    #[serde(default = "ObjectiveSpec::accuracy_energy")]
    pub objectives: ObjectiveSpec,
    #[serde(default = "default_reward")]
    pub reward: RewardConfig,
    #[serde(default)]
    pub fidelity: FidelityConfig,
    pub engine: EngineConfig,
    /// Threads for batch evaluation; results never depend on it.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Sliding window for constraint satisfaction series.
    #[serde(default = "default_window")]
    pub satisfaction_window: usize,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads, resolves relative paths against the file's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NasError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                let joined = base.join(&*p);
                *p = std::path::absolute(&joined).unwrap_or(joined);
            }
        };
        if let EvaluatorConfig::Tabular { path } = &mut self.evaluator {
            fix(path);
        }
        if let ProfileSource::Path(path) = &mut self.profile {
            fix(path);
        }
    }

    /// Collects every problem before failing.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut note = |r: Result<()>| {
            if let Err(e) = r {
                errs.push(e.to_string());
            }
        };
        if self.format_version != CONFIG_FORMAT_VERSION {
            note(Err(NasError::Config(format!(
                "format_version {} is not supported (expected {CONFIG_FORMAT_VERSION})",
                self.format_version
            ))));
        }
        note(self.space.check());
        note(self.fidelity.check());
        note(self.reward.check());
        if self.workers == 0 {
            note(Err(NasError::Config("workers must be at least 1".into())));
        }
        if self.satisfaction_window == 0 {
            note(Err(NasError::Config("satisfaction_window must be at least 1".into())));
        }
        if self.input.channels == 0 || self.input.height == 0 || self.input.width == 0 {
            note(Err(NasError::Config("input dimensions must be positive".into())));
        }
        match &self.engine {
            EngineConfig::Monas(c) => note(c.check()),
            EngineConfig::Dppnet(c) => match &self.space {
                SearchSpace::Micro(m) => note(c.check(m, &self.fidelity)),
                SearchSpace::Macro(_) => note(Err(NasError::Config(
                    "engine dppnet requires a micro space".into(),
                ))),
            },
            EngineConfig::Random(c) => note(c.check()),
            EngineConfig::Ea(c) => note(c.check()),
        }
        match &self.evaluator {
            EvaluatorConfig::Tabular { path } if !path.is_file() => note(Err(NasError::Config(
                format!("evaluator.tabular.path: file not found: {}", path.display()),
            ))),
            _ => {}
        }
        match &self.profile {
            ProfileSource::Path(path) if !path.is_file() => note(Err(NasError::Config(format!(
                "profile.path: file not found: {}",
                path.display()
            )))),
            ProfileSource::Preset(name) if DeviceProfile::preset(name).is_none() => {
                note(Err(NasError::Config(format!(
                    "profile.preset: unknown preset {name:?} (try WS, ES or M)"
                ))))
            }
            ProfileSource::Inline(p) => note(p.check()),
            _ => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(NasError::Validation(errs))
        }
    }

    pub fn resolve_profile(&self) -> Result<DeviceProfile> {
        match &self.profile {
            ProfileSource::Preset(name) => DeviceProfile::preset(name)
                .ok_or_else(|| NasError::Config(format!("unknown profile preset {name:?}"))),
            ProfileSource::Path(path) => DeviceProfile::from_json_file(path),
            ProfileSource::Inline(p) => {
                p.check()?;
                Ok(p.clone())
            }
        }
    }

    /// Pretty JSON with every default filled in.
    pub fn echo(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the echoed config, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(serde_json::to_vec(self)?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let evaluator: Box<dyn Evaluator> = match &self.evaluator {
            EvaluatorConfig::Synthetic(c) => Box::new(SyntheticOracle::new(c.clone(), &self.space)?),
            EvaluatorConfig::Tabular { path } => {
                let table = TabularBenchmark::load(path, &self.space)?;
                if table.coverage() < 1.0 {
                    log::warn!(
                        "benchmark covers {:.1}% of the space; lookups outside it fail the run",
                        100.0 * table.coverage()
                    );
                }
                Box::new(table)
            }
        };
        Ok(Prepared {
            config: self.clone(),
            evaluator,
            costs: CostModel::new(self.space.clone(), self.input),
            profile: self.resolve_profile()?,
        })
    }
}

/// A validated config with its evaluator, cost model and profile built.
pub struct Prepared {
    pub config: RunConfig,
    pub evaluator: Box<dyn Evaluator>,
    pub costs: CostModel,
    pub profile: DeviceProfile,
}

impl Prepared {
    pub fn context(&self) -> Result<EvalContext<'_>> {
        EvalContext::new(
            self.evaluator.as_ref(),
            &self.costs,
            &self.profile,
            self.config.fidelity,
        )
        .with_workers(self.config.workers)
    }

    /// Runs the configured engine. Controller runs start from `resume`
    /// when given and hand their state to `checkpoint` periodically and
    /// once more at the end.
    pub fn run<F>(&self, resume: Option<MonasState>, checkpoint: F) -> Result<SearchOutcome>
    where
        F: FnMut(&MonasState) -> Result<()>,
    {
        let cfg = &self.config;
        let ctx = self.context()?;
        let outcome = match &cfg.engine {
            EngineConfig::Monas(m) => {
                let mut state = match resume {
                    Some(s) => s,
                    None => MonasState::new(m, &cfg.space, cfg.seed)?,
                };
                let mut checkpoint = checkpoint;
                state.run(m, &cfg.reward, &ctx, &mut checkpoint)?;
                checkpoint(&state)?;
                state.outcome(&cfg.objectives)
            }
            other if resume.is_some() => {
                return Err(NasError::Config(format!(
                    "engine {} cannot resume from a checkpoint",
                    other.name()
                )))
            }
            EngineConfig::Dppnet(d) => run_dppnet(d, &ctx, &cfg.objectives, cfg.seed)?,
            EngineConfig::Random(r) => run_random(r, &cfg.reward, &ctx, &cfg.objectives, cfg.seed)?,
            EngineConfig::Ea(e) => run_ea(e, &cfg.reward, &ctx, &cfg.objectives, cfg.seed)?,
        };
        log::info!(
            "{} finished: {} evaluations, {} predictions, front of {}",
            cfg.engine.name(),
            outcome.evaluations,
            outcome.predictions,
            outcome.front.members.len()
        );
        Ok(outcome)
    }

    /// Exhaustive ground truth: every full-length candidate, noise-free,
    /// at full fidelity.
    pub fn true_front(&self, limit: u128) -> Result<(SearchTrace, ParetoFront)> {
        let cfg = &self.config;
        let (all, front) = true_front(
            self.evaluator.as_ref(),
            &self.costs,
            &self.profile,
            &cfg.fidelity,
            &cfg.objectives,
            limit,
        )?;
        let mut trace = SearchTrace::new();
        for (i, m) in all.iter().enumerate() {
            let reward = cfg.reward.reward(&m.metrics, &self.profile)?;
            trace.push(TraceRecord::new(i + 1, m.spec.key(), &m.metrics, reward, Phase::Enumerate));
        }
        Ok((trace, front))
    }
}
