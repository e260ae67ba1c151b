use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archspace::SearchSpace;
use crate::costmodel::MetricVector;
use crate::error::{NasError, Result};
use crate::pareto::{ObjectiveSpec, ParetoFront};
use crate::reward::Constraint;

/// What produced a trace row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Controller-sampled child (policy search).
    Sample,
    /// Seed evaluations: 1-layer cells, or the initial EA population.
    Init,
    /// Surrogate prediction; no true evaluation happened.
    Predict,
    /// Selected candidate evaluated after prediction.
    Evaluate,
    /// Uniform random sample.
    Random,
    /// Mutated offspring (evolutionary baseline).
    Child,
    /// Exhaustive ground-truth enumeration.
    Enumerate,
}

impl Phase {
    pub fn is_evaluated(self) -> bool {
        self != Phase::Predict
    }
}

/// One row of `trace.csv`. Field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub arch: String,
    pub accuracy: f64,
    pub error_rate: f64,
    pub params: u64,
    pub flops: u64,
    pub latency_s: f64,
    pub energy_j: f64,
    pub peak_power_w: f64,
    pub memory_bytes: u64,
    /// Scalar reward, or the predicted accuracy for `predict` rows.
    pub reward: f64,
    pub phase: Phase,
}

pub const TRACE_COLUMNS: [&str; 12] = [
    "iteration",
    "arch",
    "accuracy",
    "error_rate",
    "params",
    "flops",
    "latency_s",
    "energy_j",
    "peak_power_w",
    "memory_bytes",
    "reward",
    "phase",
];

impl TraceRecord {
    pub fn new(iteration: usize, arch: String, m: &MetricVector, reward: f64, phase: Phase) -> Self {
        Self {
            iteration,
            arch,
            accuracy: m.accuracy,
            error_rate: m.error_rate,
            params: m.params,
            flops: m.flops,
            latency_s: m.latency_s,
            energy_j: m.energy_j,
            peak_power_w: m.peak_power_w,
            memory_bytes: m.memory_bytes,
            reward,
            phase,
        }
    }

    pub fn metrics(&self) -> MetricVector {
        MetricVector {
            accuracy: self.accuracy,
            error_rate: self.error_rate,
            params: self.params,
            flops: self.flops,
            latency_s: self.latency_s,
            energy_j: self.energy_j,
            peak_power_w: self.peak_power_w,
            memory_bytes: self.memory_bytes,
        }
    }
}

/// Append-only log of a search.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub records: Vec<TraceRecord>,
}

impl SearchTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        debug_assert!(
            self.records
                .last()
                .is_none_or(|r| r.iteration <= record.iteration),
            "iterations must be non-decreasing"
        );
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Rows backed by a true evaluation.
    pub fn evaluated(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.phase.is_evaluated())
    }

    pub fn evaluated_count(&self) -> usize {
        self.evaluated().count()
    }

    /// Front over evaluated rows; an architecture sampled twice counts once,
    /// at its first evaluation.
    pub fn front(&self, objectives: &ObjectiveSpec) -> ParetoFront {
        self.front_after(usize::MAX, objectives)
    }

    /// Front over the first `n` evaluated rows.
    pub fn front_after(&self, n: usize, objectives: &ObjectiveSpec) -> ParetoFront {
        let mut seen = HashSet::new();
        let metrics: Vec<(&str, MetricVector)> = self
            .evaluated()
            .take(n)
            .filter(|r| seen.insert(r.arch.as_str()))
            .map(|r| (r.arch.as_str(), r.metrics()))
            .collect();
        ParetoFront::extract(metrics.iter().map(|(a, m)| (*a, m)), objectives)
    }

    /// Checks that every row decodes in `space` and iterations never go back.
    pub fn check(&self, space: &SearchSpace) -> Result<()> {
        for pair in self.records.windows(2) {
            if pair[1].iteration < pair[0].iteration {
                return Err(NasError::Data(format!(
                    "trace iteration decreases from {} to {}",
                    pair[0].iteration, pair[1].iteration
                )));
            }
        }
        for r in &self.records {
            space.decode(&r.arch)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.records.is_empty() {
            w.write_record(TRACE_COLUMNS)?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| NasError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        if header.len() < TRACE_COLUMNS.len()
            || header.iter().zip(TRACE_COLUMNS).any(|(h, c)| h != c)
        {
            return Err(NasError::Data(format!(
                "trace header {header:?} does not start with {TRACE_COLUMNS:?}"
            )));
        }
        let records = rd.deserialize().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| NasError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Sliding-window fraction of evaluated children that satisfy `constraint`.
///
/// One point per evaluated row from the `window`-th onward, keyed by that
/// row's iteration. A window longer than the trace is an error.
pub fn satisfaction_rate(
    trace: &SearchTrace,
    constraint: &Constraint,
    window: usize,
) -> Result<Vec<(usize, f64)>> {
    let rows: Vec<(usize, bool)> = trace
        .evaluated()
        .map(|r| (r.iteration, constraint.satisfied(&r.metrics())))
        .collect();
    satisfaction_series(&rows, window)
}

pub(crate) fn satisfaction_series(rows: &[(usize, bool)], window: usize) -> Result<Vec<(usize, f64)>> {
    if window == 0 || window > rows.len() {
        return Err(NasError::Data(format!(
            "satisfaction window {window} must be between 1 and the trace length {}",
            rows.len()
        )));
    }
    let mut inside = rows[..window].iter().filter(|r| r.1).count();
    let mut out = Vec::with_capacity(rows.len() - window + 1);
    out.push((rows[window - 1].0, inside as f64 / window as f64));
    for i in window..rows.len() {
        inside += usize::from(rows[i].1);
        inside -= usize::from(rows[i - window].1);
        out.push((rows[i].0, inside as f64 / window as f64));
    }
    Ok(out)
}
