//! Command-line harness: loads a space configuration, runs named check
//! suites and writes JSON reports plus CSV plot data.
//!
//! Exit codes: 0 when every selected check passes, 1 on check failures,
//! 2 on usage or configuration errors.

mod checks;
mod config;
mod report;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "srflab",
    about = "heat flows, optimal transport and curvature checks on time-dependent weighted graphs",
    version
)]
struct Cli {
    /// Configuration file (TOML); see `srflab init`
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and plot data
    #[arg(long, global = true, default_value = "srflab-out")]
    out: PathBuf,
    /// RNG seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scale factor of the mesh-dependent tolerances (tol = scale * dx)
    #[arg(long, global = true)]
    tol_scale: Option<f64>,
    /// Re-run grid checks at this many refinements and emit trend tables
    #[arg(long, global = true, default_value_t = 0)]
    refine: u32,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a configuration template with every numeric default explicit
    Init {
        /// Path for the template
        #[arg(default_value = "srflab.toml")]
        path: PathBuf,
    },
    /// Propagator algebra: Chapman-Kolmogorov, Markov kernels, duality,
    /// integration by parts, energy estimate
    CheckHeat,
    /// Gradient estimate over the configured alpha grid
    CheckGradient,
    /// L^p transport estimates over the configured p grid and measure pairs
    CheckTransport,
    /// Pointwise dynamic Bochner inequality scan
    CheckBochner,
    /// Entropy convexity along quantile geodesics (1D grids)
    CheckConvexity,
    /// Coupled backward walks: contraction and moment scaling
    SimulateCoupling,
    /// Aggregate the JSON records of an output directory
    Report,
}

fn load_config(cli: &Cli) -> Result<config::Config, String> {
    let path = cli
        .config
        .as_ref()
        .ok_or("missing --config PATH (generate one with `srflab init`)")?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    config::Config::parse(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Command::Init { path } = &cli.command {
        if let Err(e) = std::fs::write(path, config::TEMPLATE) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(2);
        }
        println!("wrote {}", path.display());
        return ExitCode::SUCCESS;
    }
    if let Command::Report = &cli.command {
        return match checks::report(&cli.out) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        };
    }

    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let ctx = checks::RunContext {
        out: cli.out.clone(),
        seed: cli.seed.unwrap_or(cfg.rng.seed),
        tol_scale: cli.tol_scale.unwrap_or(cfg.checks.tolerance_scale),
        refine: cli.refine,
    };

    let result = match &cli.command {
        Command::CheckHeat => checks::check_heat(&cfg, &ctx),
        Command::CheckGradient => checks::check_gradient(&cfg, &ctx),
        Command::CheckTransport => checks::check_transport(&cfg, &ctx),
        Command::CheckBochner => checks::check_bochner(&cfg, &ctx),
        Command::CheckConvexity => checks::check_convexity(&cfg, &ctx),
        Command::SimulateCoupling => checks::simulate_coupling(&cfg, &ctx),
        Command::Init { .. } | Command::Report => unreachable!(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
