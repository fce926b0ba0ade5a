//! Library side of the `rk` tool: config ingestion, task orchestration and
//! report emission. The binary is a thin argument parser over [`run`].
//!
//! Exit codes: 0 when every check passes, 1 when the task ran but a check
//! failed, 2 for invalid input, 3 for a numerical failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

pub mod config;
pub mod report;
pub mod tasks;

pub use config::{ExperimentConfig, Task};
pub use report::{CheckResult, RunReport};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }

    /// Machine-readable diagnostic for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.message() })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<dominant::Error> for CliError {
    fn from(e: dominant::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub task: Task,
    pub config: PathBuf,
    pub out: PathBuf,
    /// Overrides the config seed.
    pub seed: Option<u64>,
    /// Size of the worker pool; `None` uses the global pool.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: RunReport,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.pass {
            0
        } else {
            1
        }
    }
}

/// Loaded config plus everything needed to name the run.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub canonical: serde_json::Value,
    pub seed: u64,
    pub hash: String,
}

/// Parses, validates and hashes a config without running anything.
pub fn prepare(task: Task, path: &Path, seed: Option<u64>) -> Result<Prepared, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("reading {}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("malformed JSON in {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let config = ExperimentConfig::parse(value.clone(), base)?;
    if config.task != task {
        return Err(CliError::Validation(format!(
            "command line task {} does not match config task {}",
            task.name(),
            config.task.name()
        )));
    }
    let seed = seed.or(config.seed).unwrap_or(0);
    value.as_object_mut().expect("config parsed as an object").insert("seed".into(), seed.into());
    let hash = report::config_hash(&value, &config.referenced_files())?;
    Ok(Prepared { config, canonical: value, seed, hash })
}

fn execute(p: &Prepared) -> Result<report::TaskOutput, CliError> {
    tasks::run_task(&p.config, p.seed)
}

/// Runs a task end to end and writes its artifacts. Nothing is written when
/// the config is rejected or the computation fails.
pub fn run(opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let prepared = prepare(opts.task, &opts.config, opts.seed)?;
    let start = Instant::now();
    let output = match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
            pool.install(|| execute(&prepared))?
        }
        None => execute(&prepared)?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    let pass = output.checks.iter().all(|c| c.pass);
    let report = RunReport {
        tool: report::TOOL,
        version: report::VERSION,
        task: opts.task,
        config_hash: prepared.hash.clone(),
        seed: prepared.seed,
        config: prepared.canonical.clone(),
        checks: output.checks,
        pass,
        results: output.results,
    };
    let timing = serde_json::json!({
        "config_hash": prepared.hash,
        "wall_clock_seconds": elapsed,
        "threads": opts.threads.unwrap_or_else(rayon::current_num_threads),
        "unix_time": std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    });
    let dir = report::write_artifacts(&opts.out, &report, &output.tables, &timing)?;
    Ok(RunOutcome { dir, report })
}
