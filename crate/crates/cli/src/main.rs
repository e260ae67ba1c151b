//! Command-line driver: one search, report or enumeration per invocation.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pareto_nas::config::{ProfileSource, RunConfig};
use pareto_nas::engines::MonasState;
use pareto_nas::evaluator::ENUMERATION_LIMIT;
use pareto_nas::report::{self, ReportInput, CHECKPOINT_FILE};
use pareto_nas::{DeviceProfile, NasError};

#[derive(Parser)]
#[command(name = "pareto-nas", version, about = "Multi-objective neural architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured search engine and write its artifacts.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's device profile with a preset.
        #[arg(long)]
        profile: Option<String>,
        /// Continue a controller run from its checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compare finished runs: fronts, hypervolume, satisfaction, summaries.
    Report {
        /// Run directories or trace.csv files.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Sliding window for satisfaction series; defaults to each run's own.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Enumerate the whole space and write the exact front.
    Truefront {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, default_value_t = ENUMERATION_LIMIT)]
        limit: u128,
    },
    /// Device profile presets.
    Profiles {
        #[command(subcommand)]
        action: ProfilesAction,
    },
}

#[derive(Subcommand)]
enum ProfilesAction {
    /// Print every preset as JSON.
    List,
}

/// Failure split by exit code.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let usage = e
            .chain()
            .any(|c| c.downcast_ref::<NasError>().is_some_and(NasError::is_usage_error));
        if usage {
            Failure::Usage(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

impl From<NasError> for Failure {
    fn from(e: NasError) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn usage(msg: String) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg))
}

/// Exclusive claim on an output directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let path = dir.join(".pareto-nas.lock");
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| {
                format!("{} is locked by another run (remove {} if stale)", dir.display(), path.display())
            })?;
        writeln!(f, "{}", std::process::id()).context("writing lock file")?;
        Ok(Self { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn load_config(path: &Path, seed: Option<u64>, profile: Option<String>) -> Result<RunConfig, Failure> {
    if !path.is_file() {
        return Err(usage(format!("config file not found: {}", path.display())));
    }
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(p) = profile {
        cfg.profile = ProfileSource::Preset(p);
        cfg.validate()?;
    }
    Ok(cfg)
}

/// Writes to a sibling temp file first so a crash never leaves half a file.
fn write_atomic(path: &Path, text: &str) -> anyhow::Result<()> {
    let tmp = path.with_extension("json.tmp");
    let mut f = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(text.as_bytes())?;
    f.sync_all()?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

fn cmd_search(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    profile: Option<String>,
    resume: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = load_config(config, seed, profile)?;
    let state = match resume {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read checkpoint {}: {e}", p.display())))?;
            Some(MonasState::from_json(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let _lock = DirLock::acquire(out)?;
    log::info!("search: engine {} seed {} -> {}", cfg.engine.name(), cfg.seed, out.display());
    let prepared = cfg.prepare()?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let outcome = prepared.run(state, |s| {
        let text = s.to_json()?;
        write_atomic(&ckpt, &text).map_err(|e| NasError::Data(format!("checkpoint: {e:#}")))?;
        log::debug!("checkpoint at iteration {}", s.iteration);
        Ok(())
    })?;
    report::write_run_artifacts(out, &cfg, &prepared.profile, &outcome)?;
    println!(
        "{}: {} evaluations, front of {} written to {}",
        cfg.engine.name(),
        outcome.evaluations,
        outcome.front.members.len(),
        out.display()
    );
    Ok(())
}

fn cmd_report(traces: &[PathBuf], out: &Path, window: Option<usize>) -> Result<(), Failure> {
    if window == Some(0) {
        return Err(usage("--window must be at least 1".into()));
    }
    let mut inputs = Vec::with_capacity(traces.len());
    for t in traces {
        if !t.exists() {
            return Err(usage(format!("trace not found: {}", t.display())));
        }
        inputs.push(ReportInput::load(t).with_context(|| format!("reading {}", t.display()))?);
    }
    let mut seen = std::collections::HashSet::new();
    for (i, inp) in inputs.iter_mut().enumerate() {
        if !seen.insert(inp.label.clone()) {
            inp.label = format!("{}#{}", inp.label, i + 1);
        }
    }
    let rep = report::build_report(&inputs, window)?;
    let _lock = DirLock::acquire(out)?;
    report::write_report(out, &rep)?;
    println!(
        "report over {} runs: union front of {} written to {}",
        inputs.len(),
        rep.fronts.union.len(),
        out.display()
    );
    Ok(())
}

fn cmd_truefront(config: &Path, out: &Path, profile: Option<String>, limit: u128) -> Result<(), Failure> {
    let cfg = load_config(config, None, profile)?;
    let size = cfg.space.stats()?.total_candidates;
    if size > limit {
        return Err(NasError::SpaceTooLarge { size, limit }.into());
    }
    let _lock = DirLock::acquire(out)?;
    let prepared = cfg.prepare()?;
    let (all, front) = prepared.true_front(limit)?;
    report::write_true_front(out, &all, &front)?;
    println!(
        "{} candidates enumerated, true front of {} written to {}",
        all.len(),
        front.members.len(),
        out.display()
    );
    Ok(())
}

fn cmd_profiles_list() -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(&DeviceProfile::presets()).context("serializing presets")?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(anyhow::Error::from(e).into()),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PARETO_NAS_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search {
            config,
            out,
            seed,
            profile,
            resume,
        } => cmd_search(&config, &out, seed, profile, resume.as_deref()),
        Command::Report { traces, out, window } => cmd_report(&traces, &out, window),
        Command::Truefront {
            config,
            out,
            profile,
            limit,
        } => cmd_truefront(&config, &out, profile, limit),
        Command::Profiles {
            action: ProfilesAction::List,
        } => cmd_profiles_list(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
