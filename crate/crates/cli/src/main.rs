//! `nlsys`: experiment runner for block-structured nonlinear Schrödinger systems.
//!
//! Exit codes: 0 success, 1 domain failure, 2 usage or parse failure.

mod commands;
mod config;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::ExperimentConfig;
use crate::run::{usage, Failure, RunDir};

#[derive(Parser)]
#[command(name = "nlsys", version, about = "Variational experiments for nonlinear Schrödinger systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Run directory; overrides `outputs.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the block structure, per-block connectivity and the dominance condition.
    CheckMatrix(Common),
    /// Solve for the radial ground state and write its profile table.
    GroundState(Common),
    /// Compute the block constants and synchronized coefficients.
    Mu(Common),
    /// Minimize the energy on the Nehari set with the gradient flow.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Solve even when the coupling hypotheses fail.
        #[arg(long)]
        force: bool,
    },
    /// Fit decay rates and tail energies of a saved state.
    DecayReport {
        #[command(flatten)]
        common: Common,
        /// State checkpoint written by `solve`.
        #[arg(long)]
        state: PathBuf,
    },
    /// Energy bound for least-energy solutions, optionally checked against a state.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// State checkpoint whose total norm is compared with the bound.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Sliding-window rates of the sublinear non-decaying solution.
    Counterexample(Common),
    /// Energy of multi-bump test functions on a list of orbit radii.
    TestFunctionSweep(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckMatrix(_) => "check-matrix",
            Command::GroundState(_) => "ground-state",
            Command::Mu(_) => "mu",
            Command::Solve { .. } => "solve",
            Command::DecayReport { .. } => "decay-report",
            Command::Bounds { .. } => "bounds",
            Command::Counterexample(_) => "counterexample",
            Command::TestFunctionSweep(_) => "test-function-sweep",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::CheckMatrix(c)
            | Command::GroundState(c)
            | Command::Mu(c)
            | Command::Counterexample(c)
            | Command::TestFunctionSweep(c) => c,
            Command::Solve { common, .. }
            | Command::DecayReport { common, .. }
            | Command::Bounds { common, .. } => common,
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn execute(command: &Command) -> Result<(), Failure> {
    let common = command.common();
    let config = load(&common.config)?;
    let base = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let dir = RunDir::create(command.name(), &config, common.out.as_deref())?;
    let mut ctx = Context {
        config: &config,
        base,
        dir,
    };
    let result = match command {
        Command::CheckMatrix(_) => commands::check_matrix(&mut ctx),
        Command::GroundState(_) => commands::ground_state(&mut ctx),
        Command::Mu(_) => commands::mu(&mut ctx),
        Command::Solve { force, .. } => commands::solve(&mut ctx, *force),
        Command::DecayReport { state, .. } => commands::decay_report(&mut ctx, state),
        Command::Bounds { state, .. } => commands::bounds(&mut ctx, state.as_deref()),
        Command::Counterexample(_) => commands::counterexample(&mut ctx),
        Command::TestFunctionSweep(_) => commands::test_function_sweep_cmd(&mut ctx),
    };
    let root = ctx.dir.root().display().to_string();
    let hash = ctx.dir.hash().to_string();
    ctx.dir.finish(&result)?;
    println!("{} {} -> {root} (config {})", command.name(), if result.is_ok() { "pass" } else { "fail" }, &hash[..12]);
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
