//! `recdual` command-line front end.
//!
//! Numeric defaults, in one place:
//!
//! | option            | default | used by            |
//! |-------------------|---------|--------------------|
//! | `--grid-n`        | 64      | solve              |
//! | `--geometric`     | 6       | solve              |
//! | `--gamma-max`     | `4L/ε`, or `10L/(1−β)` without `ε` | solve |
//! | `--tol`           | 1e-8    | solve              |
//! | `--max-iter`      | 500     | solve              |
//! | `--inner-tol`     | 1e-10   | solve              |
//! | `--iters`         | 10000   | policy, simulate   |
//! | `--sigma0`        | 1.0     | policy, simulate   |
//! | `--burn-in`       | 0.5     | policy, simulate   |
//! | `--delta`         | 1e-3    | policy             |
//! | `--paths`         | 100000  | simulate           |
//! | `--horizon`       | 40      | simulate           |
//! | `--seed`          | 0       | simulate           |
//! | `--quantum`       | 1e-6    | simulate           |
//! | `--min-group`     | 100     | simulate           |
//! | `--abs-tol`       | 1e-2    | simulate           |
//! | `--solver-tol`    | 1e-6    | simulate           |
//! | `--beta`          | 0.4     | example 1          |
//! | `--sigma`         | 0.1     | example 2          |
//! | `--scan-length`   | 12      | example 2          |
//! | `--b-prev`        | 0.45    | ramsey             |
//! | `--margin`        | 1e-3    | ramsey             |
//! | `--points`        | 400     | ramsey             |

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "recdual", version, about = "Recursive dual value functions and lottery policies")]
pub struct Cli {
    /// Worker threads for sweeps and simulation (0 = all cores).
    #[arg(long, global = true, env = "RECDUAL_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a model file and list every violation.
    Validate {
        model: PathBuf,
        #[arg(long, default_value = "validation.csv")]
        out: PathBuf,
    },
    /// Iterate the Bellman operator to the dual value field.
    Solve(SolveArgs),
    /// Recover one stage lottery with promised values.
    Policy(PolicyArgs),
    /// Simulate the chained lottery policy and check value and constraints.
    Simulate(SimulateArgs),
    /// Closed-form values of the reference examples.
    Example(ExampleArgs),
    /// Figure data and lottery dominance for the two-period Ramsey example.
    Ramsey(RamseyArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    pub model: PathBuf,
    #[arg(long, default_value = "infsup")]
    pub variant: String,
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    #[arg(long, default_value_t = 6)]
    pub geometric: usize,
    #[arg(long)]
    pub gamma_max: Option<f64>,
    /// Extra knots added to every grid axis, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub knots: Vec<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub inner_tol: f64,
    /// Overrides the model's Slater slack.
    #[arg(long)]
    pub slater_eps: Option<f64>,
    #[arg(long, default_value = "field.rdvf")]
    pub out: PathBuf,
    /// Per-iteration diagnostics.
    #[arg(long, default_value = "iterations.csv")]
    pub report: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RecoverArgs {
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    #[arg(long, default_value_t = 0.5)]
    pub burn_in: f64,
}

#[derive(Args, Debug)]
pub struct PolicyArgs {
    pub model: PathBuf,
    pub field: PathBuf,
    /// Promise vector, comma separated, or `auto` for a slack promise.
    #[arg(long, default_value = "auto")]
    pub phi: String,
    #[arg(long)]
    pub x: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    #[command(flatten)]
    pub recover: RecoverArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    #[arg(long, default_value = "stage.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub model: PathBuf,
    pub field: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 40)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub recover: RecoverArgs,
    #[arg(long, default_value_t = 1e-6)]
    pub quantum: f64,
    #[arg(long, default_value_t = 100)]
    pub min_group: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub abs_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub solver_tol: f64,
    /// Per-period path records; omitted unless given.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "simulation.csv")]
    pub summary: PathBuf,
    /// Per-history constraint checks.
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExampleArgs {
    /// 1 or 2.
    pub which: u8,
    #[arg(long, default_value_t = 0.4)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 12)]
    pub scan_length: usize,
    #[arg(long, default_value = "example.csv")]
    pub out: PathBuf,
    /// Also write the discretized example model.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RamseyArgs {
    #[arg(long, default_value_t = 0.45)]
    pub b_prev: f64,
    #[arg(long, default_value_t = 0.9)]
    pub p1: f64,
    #[arg(long, default_value_t = 0.65)]
    pub g_high: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub margin: f64,
    #[arg(long, default_value_t = 400)]
    pub points: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    NonConvergence(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::NonConvergence(m) | CliError::Io(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.threads > 0 {
        // Only fails if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let mut manifest = Manifest::new(&cli);
    let result = commands::run(&cli.command, &mut manifest);
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    };
    manifest.finish(result.as_ref().err());
    if let Err(e) = manifest.write() {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(if code == 0 { 3 } else { code });
    }
    ExitCode::from(code)
}
