//! Command-line interface for the epidemic-model toolkit: well-mixed and
//! spatial simulation, equilibrium analysis, and parameter fitting.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{anyhow, bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::Scenario;

#[derive(Parser)]
#[command(
    name = "epidiff",
    version,
    about = "Epidemic-model toolkit: simulation, equilibria, calibration, and spatial scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario config JSON file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario preset name.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Dotted-path config override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Raster width override for spatial runs.
    #[arg(long, value_name = "N")]
    nx: Option<usize>,
    /// Time-step override for spatial runs.
    #[arg(long, value_name = "X")]
    dt: Option<f64>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<Scenario> {
        config::load_config(
            self.config.as_deref(),
            self.preset.as_deref(),
            &self.set,
            self.nx,
            self.dt,
        )?
        .resolve()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the well-mixed model; write trajectory.csv and summary.json.
    SimulateOde {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Fit free parameters to data; write fit.json and model_vs_data.csv.
    Calibrate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Observation CSV with header `t,cumulative_cases`.
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Analyze endemic equilibria; write or print equilibria.json.
    Equilibria {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory; prints to stdout when omitted.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Integrate the spatial model; write totals, snapshots, and comparison.
    SimulatePde {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Expand a built-in preset; write or print its config document.
    DumpPreset {
        /// Preset name.
        name: String,
        /// Output directory; prints to stdout when omitted.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> Result<()> {
    match std::env::var("EPIDIFF_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| anyhow!("EPIDIFF_THREADS must be a positive integer, got {v:?}"))?;
            if n == 0 {
                bail!("EPIDIFF_THREADS must be at least 1");
            }
            epidiff_core::exec::configure_threads(n)?;
            Ok(())
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(anyhow!("EPIDIFF_THREADS is not readable: {e}")),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.command {
        Command::SimulateOde { scenario, out } => {
            commands::simulate_ode(&scenario.resolve()?, &out)
        }
        Command::Calibrate {
            scenario,
            data,
            out,
        } => commands::calibrate(&scenario.resolve()?, &data, &out),
        Command::Equilibria { scenario, out } => {
            commands::equilibria(&scenario.resolve()?, out.as_deref())
        }
        Command::SimulatePde { scenario, out } => {
            commands::simulate_pde(&scenario.resolve()?, &out)
        }
        Command::DumpPreset { name, out } => commands::dump_preset(&name, out.as_deref()),
    }
}
