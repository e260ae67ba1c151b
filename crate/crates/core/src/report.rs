//! Run artifacts and cross-run comparison tables.
//!
//! A run directory holds `trace.csv`, `front.json`, `metrics.json` and
//! `config-echo.json`. A report reads several run directories (or their
//! traces) and emits per-run and union fronts, a hypervolume table against
//! one shared reference point, satisfaction-rate series and summary means.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::costmodel::{DeviceProfile, MetricVector};
use crate::engines::{satisfaction_rate, GenerationStat, SearchOutcome, SearchTrace};
use crate::error::{NasError, Result};
use crate::pareto::{Direction, FrontMember, ObjectiveSpec, ParetoFront, MAX_HV_DIM};

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

pub const TRACE_FILE: &str = "trace.csv";
pub const FRONT_FILE: &str = "front.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const ECHO_FILE: &str = "config-echo.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Fraction of each objective's span added beyond its worst value.
pub const REFERENCE_MARGIN: f64 = 0.1;

/// Reference point in natural units: each objective's worst observed value
/// pushed outward by [`REFERENCE_MARGIN`] of its span.
pub fn reference_point<'a, I>(objectives: &ObjectiveSpec, metrics: I) -> Option<Vec<f64>>
where
    I: IntoIterator<Item = &'a MetricVector>,
{
    let values: Vec<Vec<f64>> = metrics
        .into_iter()
        .map(|m| {
            objectives
                .objectives()
                .iter()
                .map(|o| m.get(&o.name).expect("objective names are validated"))
                .collect()
        })
        .collect();
    if values.is_empty() {
        return None;
    }
    let reference = objectives
        .objectives()
        .iter()
        .enumerate()
        .map(|(j, o)| {
            let lo = values.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
            let hi = values.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            let margin = if span > 0.0 {
                REFERENCE_MARGIN * span
            } else {
                (REFERENCE_MARGIN * hi.abs()).max(1e-12)
            };
            match o.direction {
                Direction::Minimize => hi + margin,
                Direction::Maximize => lo - margin,
            }
        })
        .collect();
    Some(reference)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontFile {
    pub format_version: u32,
    pub objectives: ObjectiveSpec,
    pub members: Vec<FrontMember>,
}

impl From<&ParetoFront> for FrontFile {
    fn from(f: &ParetoFront) -> Self {
        Self {
            format_version: ARTIFACT_FORMAT_VERSION,
            objectives: f.objectives.clone(),
            members: f.members.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub evaluations: usize,
    pub hypervolume: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionSeries {
    pub constraint: String,
    pub window: usize,
    /// `(iteration, fraction)` pairs.
    pub series: Vec<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub evaluated: usize,
    pub mean_accuracy: f64,
    pub mean_energy_j: f64,
    pub mean_energy_norm: f64,
}

/// Contents of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub format_version: u32,
    pub engine: String,
    pub seed: u64,
    pub profile: String,
    pub config_hash: String,
    pub evaluations: usize,
    pub predictions: usize,
    pub front_size: usize,
    pub reference_point: Option<Vec<f64>>,
    /// Hypervolume of the front found so far against `reference_point`.
    pub hypervolume_curve: Vec<CurvePoint>,
    pub satisfaction: Option<SatisfactionSeries>,
    pub summary: Summary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generations: Vec<GenerationStat>,
}

pub fn summarize(trace: &SearchTrace, profile: &DeviceProfile) -> Summary {
    let rows: Vec<_> = trace.evaluated().collect();
    let n = rows.len().max(1) as f64;
    Summary {
        evaluated: rows.len(),
        mean_accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / n,
        mean_energy_j: rows.iter().map(|r| r.energy_j).sum::<f64>() / n,
        mean_energy_norm: rows
            .iter()
            .map(|r| profile.normalize_energy(r.energy_j).value())
            .sum::<f64>()
            / n,
    }
}

/// Hypervolume after every `step` evaluations, plus the final count.
pub fn hypervolume_curve(
    trace: &SearchTrace,
    objectives: &ObjectiveSpec,
    reference: &[f64],
    points: usize,
) -> Result<Vec<CurvePoint>> {
    let total = trace.evaluated_count();
    if total == 0 || objectives.len() > MAX_HV_DIM {
        return Ok(Vec::new());
    }
    let step = total.div_ceil(points.max(1)).max(1);
    let mut marks: Vec<usize> = (step..total).step_by(step).collect();
    marks.push(total);
    marks
        .into_iter()
        .map(|n| {
            Ok(CurvePoint {
                evaluations: n,
                hypervolume: trace.front_after(n, objectives).hypervolume(reference)?,
            })
        })
        .collect()
}

/// Number of points in a `metrics.json` hypervolume curve.
pub const CURVE_POINTS: usize = 50;

pub fn run_metrics(
    config: &RunConfig,
    profile: &DeviceProfile,
    outcome: &SearchOutcome,
) -> Result<RunMetrics> {
    let trace = &outcome.trace;
    let metrics: Vec<MetricVector> = trace.evaluated().map(|r| r.metrics()).collect();
    let reference = if config.objectives.len() <= MAX_HV_DIM {
        reference_point(&config.objectives, &metrics)
    } else {
        None
    };
    let curve = match &reference {
        Some(r) => hypervolume_curve(trace, &config.objectives, r, CURVE_POINTS)?,
        None => Vec::new(),
    };
    let satisfaction = match config.reward.constraint() {
        Some(c) if metrics.len() >= config.satisfaction_window => Some(SatisfactionSeries {
            constraint: c.label(),
            window: config.satisfaction_window,
            series: satisfaction_rate(trace, &c, config.satisfaction_window)?,
        }),
        Some(_) => {
            log::warn!(
                "trace has {} evaluations, fewer than satisfaction_window {}; series omitted",
                metrics.len(),
                config.satisfaction_window
            );
            None
        }
        None => None,
    };
    Ok(RunMetrics {
        format_version: ARTIFACT_FORMAT_VERSION,
        engine: config.engine.name().to_string(),
        seed: config.seed,
        profile: profile.name.clone(),
        config_hash: config.hash()?,
        evaluations: outcome.evaluations,
        predictions: outcome.predictions,
        front_size: outcome.front.members.len(),
        reference_point: reference,
        hypervolume_curve: curve,
        satisfaction,
        summary: summarize(trace, profile),
        generations: outcome.generations.clone(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| NasError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| NasError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the four run artifacts into `dir`.
pub fn write_run_artifacts(
    dir: &Path,
    config: &RunConfig,
    profile: &DeviceProfile,
    outcome: &SearchOutcome,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| NasError::io(dir, e))?;
    outcome.trace.save(&dir.join(TRACE_FILE))?;
    write_json(&dir.join(FRONT_FILE), &FrontFile::from(&outcome.front))?;
    write_json(&dir.join(METRICS_FILE), &run_metrics(config, profile, outcome)?)?;
    let mut echo = config.echo()?;
    echo.push('\n');
    let path = dir.join(ECHO_FILE);
    std::fs::write(&path, echo).map_err(|e| NasError::io(&path, e))
}

/// Writes the exhaustive ground truth: every candidate plus the front.
pub fn write_true_front(dir: &Path, all: &SearchTrace, front: &ParetoFront) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| NasError::io(dir, e))?;
    all.save(&dir.join("truefront-all.csv"))?;
    write_json(&dir.join("truefront.json"), &FrontFile::from(front))
}

/// One run fed into a report.
#[derive(Clone, Debug)]
pub struct ReportInput {
    pub label: String,
    pub trace: SearchTrace,
    pub config: RunConfig,
}

impl ReportInput {
    /// Accepts a run directory or a `trace.csv` path; the config echo must
    /// sit next to the trace.
    pub fn load(path: &Path) -> Result<Self> {
        let trace_path = if path.is_dir() {
            path.join(TRACE_FILE)
        } else {
            path.to_path_buf()
        };
        let dir: PathBuf = trace_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let echo = dir.join(ECHO_FILE);
        if !echo.is_file() {
            return Err(NasError::Config(format!(
                "{} has no {ECHO_FILE} beside it; cannot tell its objectives",
                trace_path.display()
            )));
        }
        let config: RunConfig = read_json(&echo)?;
        let label = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| trace_path.display().to_string());
        Ok(Self {
            label,
            trace: SearchTrace::load(&trace_path)?,
            config,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypervolumeRow {
    pub run: String,
    pub evaluations: usize,
    pub front_size: usize,
    pub hypervolume: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run: String,
    pub engine: String,
    pub evaluated: usize,
    pub mean_accuracy: f64,
    pub mean_energy_j: f64,
    pub mean_energy_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionRow {
    pub run: String,
    pub constraint: String,
    pub iteration: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledFront {
    pub run: String,
    pub members: Vec<FrontMember>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontsFile {
    pub format_version: u32,
    pub objectives: ObjectiveSpec,
    pub reference_point: Option<Vec<f64>>,
    pub runs: Vec<LabelledFront>,
    pub union: Vec<FrontMember>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub fronts: FrontsFile,
    pub hypervolume: Vec<HypervolumeRow>,
    pub satisfaction: Vec<SatisfactionRow>,
    pub summary: Vec<SummaryRow>,
}

/// Label used for the union row of the hypervolume table.
pub const UNION_LABEL: &str = "union";

pub fn build_report(inputs: &[ReportInput], window: Option<usize>) -> Result<Report> {
    let first = inputs
        .first()
        .ok_or_else(|| NasError::Config("report needs at least one trace".into()))?;
    let objectives = first.config.objectives.clone();
    for inp in &inputs[1..] {
        if inp.config.objectives != objectives {
            return Err(NasError::Config(format!(
                "objective sets differ: {} has {:?}, {} has {:?}",
                first.label,
                objectives.names(),
                inp.label,
                inp.config.objectives.names()
            )));
        }
    }

    let all_metrics: Vec<MetricVector> = inputs
        .iter()
        .flat_map(|i| i.trace.evaluated().map(|r| r.metrics()))
        .collect();
    let reference = if objectives.len() <= MAX_HV_DIM {
        reference_point(&objectives, &all_metrics)
    } else {
        None
    };

    let mut runs = Vec::new();
    let mut hv_rows = Vec::new();
    let mut sat_rows = Vec::new();
    let mut summary = Vec::new();
    let mut union_pool: Vec<(String, MetricVector)> = Vec::new();
    for inp in inputs {
        let front = inp.trace.front(&objectives);
        let hypervolume = match &reference {
            Some(r) => front.hypervolume(r)?,
            None => f64::NAN,
        };
        hv_rows.push(HypervolumeRow {
            run: inp.label.clone(),
            evaluations: inp.trace.evaluated_count(),
            front_size: front.members.len(),
            hypervolume,
        });
        union_pool.extend(front.members.iter().map(|m| (m.arch.clone(), m.metrics.clone())));
        runs.push(LabelledFront {
            run: inp.label.clone(),
            members: front.members,
        });

        let profile = inp.config.resolve_profile()?;
        let s = summarize(&inp.trace, &profile);
        summary.push(SummaryRow {
            run: inp.label.clone(),
            engine: inp.config.engine.name().to_string(),
            evaluated: s.evaluated,
            mean_accuracy: s.mean_accuracy,
            mean_energy_j: s.mean_energy_j,
            mean_energy_norm: s.mean_energy_norm,
        });

        if let Some(c) = inp.config.reward.constraint() {
            let w = window.unwrap_or(inp.config.satisfaction_window);
            if inp.trace.evaluated_count() >= w {
                for (iteration, fraction) in satisfaction_rate(&inp.trace, &c, w)? {
                    sat_rows.push(SatisfactionRow {
                        run: inp.label.clone(),
                        constraint: c.label(),
                        iteration,
                        fraction,
                    });
                }
            } else {
                log::warn!("{}: trace shorter than window {w}; no satisfaction series", inp.label);
            }
        }
    }

    let mut seen = std::collections::HashSet::new();
    union_pool.retain(|(a, _)| seen.insert(a.clone()));
    let union = ParetoFront::extract(union_pool.iter().map(|(a, m)| (a.as_str(), m)), &objectives);
    hv_rows.push(HypervolumeRow {
        run: UNION_LABEL.into(),
        evaluations: hv_rows.iter().map(|r| r.evaluations).sum(),
        front_size: union.members.len(),
        hypervolume: match &reference {
            Some(r) => union.hypervolume(r)?,
            None => f64::NAN,
        },
    });

    Ok(Report {
        fronts: FrontsFile {
            format_version: ARTIFACT_FORMAT_VERSION,
            objectives,
            reference_point: reference,
            runs,
            union: union.members,
        },
        hypervolume: hv_rows,
        satisfaction: sat_rows,
        summary,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| NasError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| NasError::io(path, e))
}

pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| NasError::io(dir, e))?;
    write_json(&dir.join("fronts.json"), &report.fronts)?;
    write_csv(
        &dir.join("hypervolume.csv"),
        &report.hypervolume,
        &["run", "evaluations", "front_size", "hypervolume"],
    )?;
    write_csv(
        &dir.join("satisfaction.csv"),
        &report.satisfaction,
        &["run", "constraint", "iteration", "fraction"],
    )?;
    write_csv(
        &dir.join("summary.csv"),
        &report.summary,
        &["run", "engine", "evaluated", "mean_accuracy", "mean_energy_j", "mean_energy_norm"],
    )
}
