//! `crowdctl`: experiment harness for the multiscale controlled
//! particle-system toolkit.
//!
//! One subcommand per scale; each run writes CSV series, a companion
//! semi-log plot script and a human-readable summary into the output
//! directory. Exit status: 0 when every declared invariant holds, 1 on an
//! invariant violation, 2 on configuration or I/O errors.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod plot;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{apply_overrides, parse_config, ExperimentConfig, Overrides, Scale};
use runner::{CliError, MeasureInputs};

#[derive(Parser)]
#[command(
    name = "crowdctl",
    about = "Multiscale Riccati-controlled crowd dynamics harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Controlled particle system: Lyapunov decay vs the theoretical envelope.
    Particle(CommonArgs),
    /// Mean-field flow: Dobrushin stability and measure-level decay.
    Meanfield(MeanfieldArgs),
    /// Damped pressureless gas dynamics on a periodic grid.
    Hydro(CommonArgs),
    /// Alignment models under instantaneous receding-horizon control.
    Nonlinear(CommonArgs),
    /// Structural checks of the matrix Riccati solution.
    RiccatiCheck(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (`key = value` lines, `#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Control weight(s), comma separated; overrides the config.
    #[arg(long)]
    alpha: Option<String>,
    /// PRNG seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $CROWDCTL_OUT or the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Particle count; overrides the config.
    #[arg(long)]
    n_particles: Option<usize>,
    /// Spatial cell count; overrides the config.
    #[arg(long)]
    nx: Option<usize>,
    /// Terminal time; overrides the config.
    #[arg(long)]
    horizon_t: Option<f64>,
    /// CFL number; overrides the config.
    #[arg(long)]
    cfl: Option<f64>,
    /// Pressure closure (`mono-kinetic` or `grad`); overrides the config.
    #[arg(long)]
    closure: Option<String>,
}

#[derive(Args)]
struct MeanfieldArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// First measure as a `x v [weight]` text file (default: seeded cloud).
    #[arg(long, requires = "nu")]
    mu: Option<PathBuf>,
    /// Second measure as a `x v [weight]` text file.
    #[arg(long, requires = "mu")]
    nu: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scale, common, measures) = match &cli.command {
        Command::Particle(a) => (Scale::Particle, a, MeasureInputs::default()),
        Command::Hydro(a) => (Scale::Hydro, a, MeasureInputs::default()),
        Command::Nonlinear(a) => (Scale::Nonlinear, a, MeasureInputs::default()),
        Command::RiccatiCheck(a) => (Scale::RiccatiCheck, a, MeasureInputs::default()),
        Command::Meanfield(a) => (
            Scale::Meanfield,
            &a.common,
            MeasureInputs {
                mu: a.mu.clone(),
                nu: a.nu.clone(),
            },
        ),
    };

    match execute(scale, common, &measures) {
        Ok(report) => {
            print!("{}", report.summary);
            for path in &report.artifacts {
                println!("wrote {}", path.display());
            }
            if report.pass {
                println!("result: PASS");
                ExitCode::SUCCESS
            } else {
                println!("result: FAIL (invariant violation)");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(
    scale: Scale,
    args: &CommonArgs,
    measures: &MeasureInputs,
) -> Result<runner::RunReport, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            parse_config(&text).map_err(|e| CliError::Invalid(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(config_scale) = config.scale {
        if config_scale != scale {
            return Err(CliError::Invalid(format!(
                "config requests scale `{}` but the `{}` subcommand was invoked",
                config_scale.name(),
                scale.name()
            )));
        }
    }
    let overrides = Overrides {
        alpha: args.alpha.clone(),
        seed: args.seed,
        out: args.out.clone(),
        n_particles: args.n_particles,
        nx: args.nx,
        horizon_t: args.horizon_t,
        cfl: args.cfl,
        closure: args.closure.clone(),
    };
    apply_overrides(&mut config, &overrides).map_err(|e| CliError::Invalid(e.to_string()))?;

    let out_dir = config
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("CROWDCTL_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    runner::run(scale, &config, &out_dir, measures)
}
