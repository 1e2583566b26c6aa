//! Command-line entry point: reads an experiment config, runs it inside a
//! dedicated thread pool and writes `manifest.json`, `results.json` and CSV
//! tables to the output directory.
//!
//! Exit codes: 0 when every enabled assertion passes, 1 when an assertion
//! fails, 2 for schema or input errors, 3 for I/O errors.

pub mod config;
mod experiments;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;

pub use config::{parse_config, Experiment, ExperimentConfig};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "robust-forward", version, about = "Robust forward investment experiments")]
pub struct Args {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "ROBUST_FORWARD_THREADS")]
    pub threads: Option<usize>,
    /// Seed overriding the config's.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// One named check of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything an experiment produces, before it is written out.
#[derive(Debug, Default)]
pub struct Outcome {
    pub results: serde_json::Map<String, serde_json::Value>,
    pub assertions: Vec<Assertion>,
    /// File name and contents of each CSV table.
    pub tables: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    pub fn insert<T: Serialize>(&mut self, key: &str, value: &T) -> crate::Result<()> {
        self.results.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion::new(name, passed, detail));
    }

    pub fn table<F>(&mut self, name: &str, write: F) -> crate::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> crate::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.tables.push((name.to_string(), buf));
        Ok(())
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

#[derive(Serialize)]
struct Results<'a> {
    kind: &'a str,
    seed: u64,
    passed: bool,
    assertions: &'a [Assertion],
    results: &'a serde_json::Map<String, serde_json::Value>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    created: String,
    config_path: String,
    threads: usize,
    config: &'a ExperimentConfig,
    outputs: Vec<String>,
}

/// Machine-readable failure list printed on a non-zero exit.
#[derive(Serialize)]
struct Failure<'a> {
    exit_code: i32,
    error: Option<String>,
    failed: Vec<&'a Assertion>,
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => EXIT_IO,
        _ => EXIT_SCHEMA,
    }
}

fn report_error(code: i32, msg: String) -> i32 {
    let f = Failure {
        exit_code: code,
        error: Some(msg),
        failed: Vec::new(),
    };
    eprintln!("{}", serde_json::to_string(&f).unwrap_or_default());
    code
}

/// Resolves the config (applying `--seed` and `--out`) and runs it.
pub fn run(args: &Args) -> i32 {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return report_error(EXIT_IO, format!("cannot read {}: {e}", args.config.display())),
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return report_error(EXIT_SCHEMA, format!("{}: {e}", args.config.display())),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    config.output_dir = Some(out.clone());
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => return report_error(EXIT_SCHEMA, format!("cannot start thread pool: {e}")),
    };
    let threads = pool.current_num_threads();
    let outcome = match pool.install(|| experiments::run_experiment(&config, &base)) {
        Ok(o) => o,
        Err(e) => return report_error(exit_code_for(&e), e.to_string()),
    };
    match write_outputs(&out, &config, &args.config, threads, &outcome) {
        Ok(()) => {}
        Err(e) => return report_error(exit_code_for(&e), e.to_string()),
    }
    if outcome.passed() {
        EXIT_OK
    } else {
        let f = Failure {
            exit_code: EXIT_ASSERTION,
            error: None,
            failed: outcome.assertions.iter().filter(|a| !a.passed).collect(),
        };
        eprintln!("{}", serde_json::to_string(&f).unwrap_or_default());
        EXIT_ASSERTION
    }
}

fn write_outputs(
    out: &Path,
    config: &ExperimentConfig,
    config_path: &Path,
    threads: usize,
    outcome: &Outcome,
) -> crate::Result<()> {
    std::fs::create_dir_all(out)?;
    let results = Results {
        kind: config.experiment.kind(),
        seed: config.seed,
        passed: outcome.passed(),
        assertions: &outcome.assertions,
        results: &outcome.results,
    };
    let mut json = serde_json::to_string_pretty(&results)?;
    json.push('\n');
    std::fs::write(out.join("results.json"), json)?;
    let mut outputs = vec!["results.json".to_string()];
    for (name, bytes) in &outcome.tables {
        std::fs::write(out.join(name), bytes)?;
        outputs.push(name.clone());
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        created: chrono::Utc::now().to_rfc3339(),
        config_path: config_path.display().to_string(),
        threads,
        config,
        outputs,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(out.join("manifest.json"), json)?;
    Ok(())
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Args::try_parse_from(args) {
        Ok(a) => run(&a),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_SCHEMA } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
