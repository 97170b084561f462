//! `liouville`: experiment runner for the path-integral moment closure.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 validation failure, 1 I/O error.

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use toml::{Table, Value};

use run::{RunOutput, Status};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

const VALIDATION_FAILURE: u8 = 4;

#[derive(Parser)]
#[command(name = "liouville", version, about = "Path-integral moment closure experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Subcommand)]
enum Command {
    /// Check residual, adjoint and Hamiltonian identities on random contexts.
    Validate(Args),
    /// Solve for the extremal path.
    Extremal(Args),
    /// Sample the path measure by Metropolis.
    Mcmc(Args),
    /// Integrate a trajectory ensemble from a trial density.
    Ensemble(Args),
    /// Information loss against its second-order prediction.
    Ilscan(Args),
    /// Compare the direct Lagrangian with its coefficient form.
    Reconcile(Args),
}

#[derive(Clone, clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Extremal(_) => "extremal",
            Command::Mcmc(_) => "mcmc",
            Command::Ensemble(_) => "ensemble",
            Command::Ilscan(_) => "ilscan",
            Command::Reconcile(_) => "reconcile",
        }
    }

    fn args(&self) -> &Args {
        match self {
            Command::Validate(a)
            | Command::Extremal(a)
            | Command::Mcmc(a)
            | Command::Ensemble(a)
            | Command::Ilscan(a)
            | Command::Reconcile(a) => a,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let name = cli.command.name();
    match execute(&cli.command) {
        Ok(status) => {
            eprintln!("{name} finished in {:.3} s", started.elapsed().as_secs_f64());
            match status {
                Status::Ok => ExitCode::SUCCESS,
                Status::NumericFailure(m) => {
                    eprintln!("numerical failure: {m}");
                    ExitCode::from(3)
                }
                Status::ValidationFailure(m) => {
                    eprintln!("validation failure: {m}");
                    ExitCode::from(VALIDATION_FAILURE)
                }
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

fn execute(command: &Command) -> Result<Status, CliError> {
    let args = command.args();
    if let Some(k) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let loaded = config::load(&args.config)?;
    let name = command.name();
    let header = format!(
        "liouville {} {name}\nconfig sha256 {}",
        env!("CARGO_PKG_VERSION"),
        loaded.hash
    );
    let output = match command {
        Command::Validate(_) => run::run_validate(&loaded, &header)?,
        Command::Extremal(_) => run::run_extremal(&loaded, &header)?,
        Command::Mcmc(_) => run::run_mcmc(&loaded, &header)?,
        Command::Ensemble(_) => run::run_ensemble(&loaded, &header)?,
        Command::Ilscan(_) => run::run_ilscan(&loaded, &header)?,
        Command::Reconcile(_) => run::run_reconcile(&loaded, &header)?,
    };
    write_outputs(&args.out, name, &loaded, output)
}

fn write_outputs(out: &Path, name: &str, loaded: &config::Loaded, output: RunOutput) -> Result<Status, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut summary = Table::new();
    summary.insert("command".into(), Value::String(name.into()));
    summary.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
    summary.insert("config_sha256".into(), Value::String(loaded.hash.clone()));
    summary.insert("system".into(), Value::String(loaded.system.name().into()));
    summary.insert("family_size".into(), Value::Integer(loaded.family.len() as i64));
    summary.insert("beta".into(), Value::Float(loaded.family.beta()));
    summary.insert(
        "status".into(),
        Value::String(match &output.status {
            Status::Ok => "ok".into(),
            Status::NumericFailure(m) => format!("numerical failure: {m}"),
            Status::ValidationFailure(m) => format!("validation failure: {m}"),
        }),
    );
    summary.insert(
        "files".into(),
        Value::Array(output.files.iter().map(|(f, _)| Value::String(f.clone())).collect()),
    );
    if !loaded.warnings.is_empty() {
        summary.insert(
            "config_warnings".into(),
            Value::Array(loaded.warnings.iter().cloned().map(Value::String).collect()),
        );
    }
    summary.insert("results".into(), Value::Table(output.summary));
    let text = toml::to_string(&summary).map_err(|e| CliError::Io(format!("summary: {e}")))?;
    let mut files = output.files;
    files.push((format!("{name}_summary.toml"), text));
    for (file, body) in &files {
        let path: PathBuf = out.join(file);
        std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(output.status)
}
