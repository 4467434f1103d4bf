//! The `semnet` command line: `solve`, `sweep` and `fit`.
//!
//! Exit codes: 0 on success, 1 for invalid arguments, configurations or
//! sweeps, 2 for I/O failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{error::ErrorKind, Parser, Subcommand};
use serde_json::{json, Value};

use crate::accuracy::fit_accuracy_model;
use crate::harness::{emit_csv, preset, run_point, run_sweep, write_csv, HarnessError, SweepConfig};
use crate::kuer::SolverTag;
use crate::scenario::{generate_scenario, Scenario, ScenarioConfig, ScenarioError};

/// Environment variable capping worker threads (0 or unset: one per core).
pub const THREADS_ENV: &str = "SEMNET_THREADS";

#[derive(Debug, Parser)]
#[command(name = "semnet", version, about = "Knowledge sharing, extraction ratio and association solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one scenario and print the association as JSON.
    Solve {
        /// Scenario JSON, or a scenario config to draw from with --seed.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "efficient")]
        solver: SolverTag,
        /// Seed used when --scenario is a config.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep and write a CSV.
    Sweep {
        /// fig4, fig5, fig6, fig7, fig8 or fig9.
        #[arg(long, required_unless_present = "config", conflicts_with = "config")]
        preset: Option<String>,
        /// Sweep config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to these solvers (repeatable).
        #[arg(long = "solver")]
        solvers: Vec<SolverTag>,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the accuracy curve to `xi,eps` samples.
    Fit {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Scenario(s) => s.into(),
            HarnessError::WriteFailed { .. } => CliError::Io(e.to_string()),
            HarnessError::InvalidSweep(_) => CliError::Invalid(e.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn parse_and_run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = match thread_pool() {
        Ok(Some(pool)) => pool.install(|| run(cli.command)),
        Ok(None) => run(cli.command),
        Err(e) => Err(e),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>, CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Invalid(format!("{THREADS_ENV}='{raw}' is not a thread count")))?;
    if n == 0 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| CliError::Invalid(format!("cannot start {n} worker threads: {e}")))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve {
            scenario,
            solver,
            seed,
            out,
        } => solve(&scenario, solver, seed, out.as_deref()),
        Command::Sweep {
            preset: name,
            config,
            trials,
            seed,
            solvers,
            out,
        } => {
            let mut cfg = match (name, config) {
                (Some(name), _) => preset(&name)?,
                (None, Some(path)) => SweepConfig::from_json_file(&path)?,
                (None, None) => unreachable!("clap requires --preset or --config"),
            };
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if !solvers.is_empty() {
                cfg.solvers = solvers;
            }
            let result = run_sweep(&cfg)?;
            match out {
                Some(path) => emit_csv(&result, &path)?,
                None => write_csv(&result, std::io::stdout().lock())
                    .map_err(|e| CliError::Io(format!("failed to write to standard output: {e}")))?,
            }
            Ok(())
        }
        Command::Fit { samples, out } => fit(&samples, out.as_deref()),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("failed to read {}: {e}", path.display())))
}

fn emit_text(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = out {
        std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("failed to write {}: {e}", path.display())))?;
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{text}").map_err(|e| CliError::Io(format!("failed to write to standard output: {e}")))
}

/// A scenario file, or a config (no `devices` key) drawn with `seed`.
fn load_scenario(path: &Path, seed: u64) -> Result<Scenario, CliError> {
    let text = read_text(path)?;
    let parse_err = |e: serde_json::Error| CliError::Invalid(format!("failed to parse {}: {e}", path.display()));
    let value: Value = serde_json::from_str(&text).map_err(parse_err)?;
    if value.get("devices").is_some() {
        let scenario: Scenario = serde_json::from_value(value).map_err(parse_err)?;
        scenario.validate()?;
        Ok(scenario)
    } else {
        let cfg: ScenarioConfig = serde_json::from_value(value).map_err(parse_err)?;
        cfg.validate()?;
        Ok(generate_scenario(&cfg, seed)?)
    }
}

fn solve(path: &Path, solver: SolverTag, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let scenario = load_scenario(path, seed)?;
    let outcome = run_point(&scenario, solver);
    let assignment: Vec<Value> = outcome
        .assignment
        .pairs
        .iter()
        .map(|&(m, n)| {
            let gamma = outcome.pairs[m][n].as_ref().map(|s| s.gamma).unwrap_or(0.0);
            json!({ "device": m, "station": n, "rate": gamma })
        })
        .collect();
    let mut pairs = Vec::new();
    for (m, row) in outcome.pairs.iter().enumerate() {
        let device = &scenario.devices[m];
        for (n, res) in row.iter().enumerate() {
            let entry = match res {
                Ok(s) => {
                    let ids = |set: crate::ratetime::ClassSet| -> Vec<u32> {
                        set.iter().map(|i| device.required_classes[i].class_id).collect()
                    };
                    json!({
                        "device": m,
                        "station": n,
                        "feasible": s.feasible,
                        "rate": s.gamma,
                        "xi": s.xi,
                        "accuracy": s.accuracy,
                        "uploaded": ids(s.partition.k_up),
                        "semantic": ids(s.partition.k_cu),
                        "bit": ids(s.partition.k_bit),
                        "delay": s.breakdown.t_total,
                    })
                }
                Err(e) => json!({
                    "device": m,
                    "station": n,
                    "feasible": false,
                    "error": e.to_string(),
                }),
            };
            pairs.push(entry);
        }
    }
    let report = json!({
        "solver": solver.as_str(),
        "total_rate": outcome.total_rate,
        "n_associated": outcome.assignment.pairs.len(),
        "assignment": assignment,
        "pairs": pairs,
    });
    let text = serde_json::to_string_pretty(&report).expect("report is plain JSON");
    emit_text(&text, out)
}

fn fit(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let text = read_text(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Invalid(format!("{}: missing column '{name}'", path.display())))
    };
    let (xi_col, eps_col) = (column("xi")?, column("eps")?);
    let mut samples = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let field = |col: usize| -> Result<f64, CliError> {
            record
                .get(col)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::Invalid(format!("{}: bad number on data row {}", path.display(), line + 1)))
        };
        samples.push((field(xi_col)?, field(eps_col)?));
    }
    let fitted = fit_accuracy_model(&samples).map_err(|e| CliError::Invalid(e.to_string()))?;
    let report = json!({ "theta": fitted.theta, "mse": fitted.mse });
    let text = serde_json::to_string_pretty(&report).expect("report is plain JSON");
    emit_text(&text, out)
}
