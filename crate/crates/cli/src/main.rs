//! `voltrisk`: fit UVC models, assess voltage risk, dispatch reactive power
//! and validate the result on held-out data.

mod commands;
mod config;
mod files;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use voltrisk_core::manage::Variant;
use voltrisk_core::CoreError;

use commands::{Outcome, SynthArgs};
use config::RunConfig;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Var,
    Cvar,
}

#[derive(Debug, Parser)]
#[command(name = "voltrisk", version, about = "Voltage risk assessment and management for radial feeders")]
struct Cli {
    /// TOML run configuration; paths inside it are relative to its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    /// Allow PV curtailment when reactive power alone is not enough.
    #[arg(long, global = true)]
    curtail: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic history, test series and day-ahead predictions.
    Synth {
        #[arg(long, default_value_t = 730)]
        days: usize,
        #[arg(long, default_value_t = 365)]
        test_days: usize,
        #[arg(long, default_value_t = 0.8)]
        pv_scale: f64,
        #[arg(long, default_value_t = 0.6)]
        load_scale: f64,
        #[arg(long, default_value_t = 0.05)]
        load_noise: f64,
    },
    /// Fit one density model per (bus, hour) from the history.
    Fit,
    /// Compute VaR and CVaR bounds for the day-ahead predictions.
    Assess {
        /// Day-ahead predictions, overriding the config.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Solve the dispatch problem for each predicted hour.
    Manage {
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Violation frequencies of the stored strategies on the test series.
    Validate,
    /// UVC-based dispatch against the Gaussian baseline on the test series.
    Compare,
}

fn exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::Input(_)
        | CoreError::Parse { .. }
        | CoreError::Io { .. }
        | CoreError::Topology(_)
        | CoreError::InsufficientData(_) => 2,
        CoreError::Infeasible(_) => 3,
        CoreError::Numeric(_) | CoreError::Solver(_) | CoreError::DegenerateConditioning { .. } | CoreError::Unbounded(_) => 4,
    }
}

fn run(cli: Cli) -> Result<Outcome, CoreError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(v) = cli.variant {
        cfg.variant = match v {
            VariantArg::Var => Variant::Var,
            VariantArg::Cvar => Variant::Cvar,
        };
    }
    if cli.curtail {
        cfg.curtailment = true;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|source| CoreError::Io {
        path: cfg.out.clone(),
        source,
    })?;
    match cli.command {
        Command::Synth {
            days,
            test_days,
            pv_scale,
            load_scale,
            load_noise,
        } => commands::synth(
            &cfg,
            &SynthArgs {
                days,
                test_days,
                pv_scale,
                load_scale,
                load_noise,
            },
        ),
        Command::Fit => commands::fit(&cfg),
        Command::Assess { predictions } => {
            cfg.predictions = predictions.or(cfg.predictions);
            commands::assess(&cfg)
        }
        Command::Manage { predictions } => {
            cfg.predictions = predictions.or(cfg.predictions);
            commands::manage(&cfg)
        }
        Command::Validate => commands::validate(&cfg),
        Command::Compare => commands::compare(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| writeln!(buf, "[{}] {}", record.level(), record.args()))
        .init();
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Exceeded) => ExitCode::from(1),
        Ok(Outcome::Infeasible) => ExitCode::from(3),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
