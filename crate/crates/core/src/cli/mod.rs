//! Scenario runner behind the `twotime` binary: TOML configuration, the
//! `run` pipeline with CSV/JSON/plot-script outputs, and the `verify`
//! invariant suite.

mod config;
mod output;
mod run;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use config::{
    BasisConfig, BinsConfig, MonteCarloConfig, OutputConfig, PointerConfig, ScenarioConfig, StateConfig, StateKind,
    TimesConfig,
};
pub use output::{format_float, plot_script, summary, to_csv, to_json, write_outputs, CSV_COLUMNS};
pub use run::{
    config_hash, run, Prepared, ReportRow, RunMetadata, RunReport, RunStatus, LEAK_WARNING, SAMPLER_POINTER_CUTOFF,
    SHORTNESS_WARNING,
};
pub use verify::{verify, Check, CheckStatus, VerifyReport, EPSILON_BUDGET, RECONCILIATION_C1, RECONCILIATION_C2};

use crate::error::Error;

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "TWOTIME_THREADS";

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVARIANT: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "twotime", about = "Two-time position correlators: standard QM vs Bohmian trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunFlags {
    /// Overrides `monte_carlo.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: $TWOTIME_THREADS, else all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs every pipeline and writes CSV, JSON and a plot script.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Runs the invariant suite and prints a pass/fail table.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Prints the version.
    Version,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Budget(_) | Error::Node { .. } | Error::Io(_) => EXIT_BUDGET,
        Error::Config(_) | Error::Domain(_) | Error::BasisMismatch(_) | Error::Protocol(_) => EXIT_CONFIG,
    }
}

/// Thread count from the flag, else the environment, else `None` (all cores).
pub fn thread_count(flag: Option<usize>, env: Option<&str>) -> crate::Result<Option<usize>> {
    let parsed = match (flag, env) {
        (Some(n), _) => Some(n),
        (None, Some(v)) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        ),
        (None, None) => None,
    };
    if parsed == Some(0) {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    Ok(parsed)
}

/// Reads a configuration file and applies command-line overrides.
pub fn load_config(path: &Path, flags: &RunFlags) -> crate::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = ScenarioConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if let Some(seed) = flags.seed {
        config.monte_carlo.seed = seed;
    }
    if let Some(dir) = &flags.out_dir {
        config.output.dir = dir.clone();
    }
    Ok(config)
}

fn with_pool<T>(flags: &RunFlags, f: impl FnOnce() -> T + Send) -> crate::Result<T>
where
    T: Send,
{
    let env = std::env::var(THREADS_ENV).ok();
    let threads = thread_count(flags.threads, env.as_deref())?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn run_command(config: &Path, flags: &RunFlags) -> crate::Result<u8> {
    let config = load_config(config, flags)?;
    let report = with_pool(flags, || run(&config))??;
    let paths = write_outputs(&report, &config.output.dir, &config.output.stem)?;
    print!("{}", summary(&report));
    for w in &report.metadata.warnings {
        eprintln!("warning: {w}");
    }
    for p in &paths {
        println!("wrote {}", p.display());
    }
    match report.budget_error() {
        Some(e) => {
            eprintln!("error: {e}");
            Ok(EXIT_BUDGET)
        }
        None => Ok(EXIT_OK),
    }
}

fn verify_command(config: &Path, flags: &RunFlags) -> crate::Result<u8> {
    let config = load_config(config, flags)?;
    let report = with_pool(flags, || verify(&config))??;
    print!("{}", report.table());
    if report.passed() {
        println!("all checks passed");
        Ok(EXIT_OK)
    } else {
        let names: Vec<&str> = report.failures().iter().map(|c| c.name.as_str()).collect();
        println!("failed: {}", names.join(", "));
        Ok(EXIT_INVARIANT)
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    let result = match &cli.command {
        Command::Run { config, flags } => run_command(config, flags),
        Command::Verify { config, flags } => verify_command(config, flags),
        Command::Version => {
            println!("twotime {}", env!("CARGO_PKG_VERSION"));
            Ok(EXIT_OK)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_environment() {
        assert_eq!(thread_count(Some(2), Some("7")).unwrap(), Some(2));
        assert_eq!(thread_count(None, Some("7")).unwrap(), Some(7));
        assert_eq!(thread_count(None, None).unwrap(), None);
        assert!(thread_count(None, Some("many")).is_err());
        assert!(thread_count(Some(0), None).is_err());
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Budget("x".into())), EXIT_BUDGET);
    }
}
