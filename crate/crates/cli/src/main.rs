mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// Constrained impulse-control solver: closed-form and grid engines,
/// optimality certificates, trajectory and dual-scan exports.
#[derive(Parser)]
#[command(name = "impulse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides output.dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> anyhow::Result<(RunConfig, PathBuf)> {
        let cfg = RunConfig::load(&self.config)?;
        let dir = self
            .out
            .clone()
            .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, dir))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the constrained problem and write the certified report.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Certificate tolerance override.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Emit the optimal strategy's event timeline as CSV.
    Trajectory {
        #[command(flatten)]
        common: Common,
        /// Time horizon of the timeline.
        #[arg(long)]
        horizon: f64,
    },
    /// Tabulate the dual functional on a list of multipliers.
    DualScan {
        #[command(flatten)]
        common: Common,
        /// Comma-separated multipliers, e.g. "0.1,0.2,0.5".
        #[arg(long = "g-list")]
        g_list: String,
    },
    /// Run the cross-check suite and report pass/fail per check.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Seed for the Monte Carlo cross-check.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tolerance override for the certificate check.
        #[arg(long)]
        tol: Option<f64>,
    },
}

fn run() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { common, tol } => {
            let (cfg, dir) = common.load()?;
            commands::cmd_solve(&cfg, &dir, tol)
        }
        Command::Trajectory { common, horizon } => {
            let (cfg, dir) = common.load()?;
            commands::cmd_trajectory(&cfg, &dir, horizon)
        }
        Command::DualScan { common, g_list } => {
            let (cfg, dir) = common.load()?;
            let gs = commands::parse_g_list(&g_list)?;
            commands::cmd_dual_scan(&cfg, &dir, &gs)
        }
        Command::Verify { common, seed, tol } => {
            let (cfg, dir) = common.load()?;
            commands::cmd_verify(&cfg, &dir, seed, tol)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
