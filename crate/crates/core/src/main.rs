use clap::{Parser, Subcommand};
use jko1d::commands;
use std::path::PathBuf;
use std::process::ExitCode;

/// Minimizing-movement solver and verification harness for 1D nonlinear
/// diffusion with a discontinuous diffusion intensity at the critical
/// density.
#[derive(Parser)]
#[command(name = "jko1d", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full trajectory and emit frames, ledger, and diagnostics.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Keep every k-th frame in the CSV (the final frame is always kept).
        #[arg(long, default_value_t = 1)]
        frames_every: usize,
    },
    /// Export the closed-form stationary profile for the log-linear setup.
    Stationary {
        #[arg(long)]
        l: f64,
        #[arg(long, default_value_t = 512)]
        cells: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Cross-validate the minimizing-movement solver against the
    /// finite-volume reference (and the stationary oracle when applicable).
    Compare {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Smoothing width of the regularized flux at the finest level.
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
        /// Simultaneous-refinement levels (cells, tau, epsilon scaled
        /// together); 1 compares at the configured resolution only.
        #[arg(long, default_value_t = 1)]
        levels: usize,
    },
    /// L1 contraction experiment between two configs differing only in
    /// initial data.
    Contraction {
        config1: PathBuf,
        config2: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Additional seeded random initial pairs.
        #[arg(long, default_value_t = 0)]
        pairs: usize,
    },
    /// Check the structural assumptions on the configured entropy.
    ValidateEntropy {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a single step and dump the per-cell phase structure.
    Step {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, frames_every } => commands::cmd_run(config, out, *frames_every),
        Command::Stationary { l, cells, out } => {
            commands::cmd_stationary(*l, *cells, out).map(|()| 0)
        }
        Command::Compare { config, out, epsilon, levels } => {
            commands::cmd_compare(config, out, *epsilon, *levels)
        }
        Command::Contraction { config1, config2, out, pairs } => {
            commands::cmd_contraction(config1, config2, out, *pairs)
        }
        Command::ValidateEntropy { config, out } => commands::cmd_validate_entropy(config, out),
        Command::Step { config, out } => commands::cmd_step(config, out),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
