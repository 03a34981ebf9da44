mod commands;
mod config;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use config::RunConfig;
use evdemand::scenario::ScenarioParams;

#[derive(Parser)]
#[command(
    name = "evdemand",
    version,
    about = "EV trip-energy estimation, charging-demand density, and community emissions analysis over link-resolved travel datasets"
)]
struct Cli {
    /// JSON run configuration; paths inside resolve against its directory
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Treat validation warnings as errors
    #[arg(long, global = true)]
    strict: bool,

    /// Worker threads for parallel stages (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Override the scenario and Monte Carlo seeds
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides the config's out_dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// 20x20 grid, 10,000 persons, AM/PM congestion
    Desk,
    /// Desk-scale grid with free-flow speeds everywhere
    Uniform,
    /// Long multi-leg itineraries that cross battery thresholds
    LongHaul,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: five tables, curves, community links,
    /// and a ready-to-run config
    Gen {
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
    },
    /// Parse the five tables and validate cross-references
    Validate,
    /// Per-trip energy by both estimators, with comparison statistics
    Estimate,
    /// Battery-threshold crossing density on the hexagonal grid
    Density,
    /// Monte Carlo fuel/CO2 removed from the community link set
    Epc,
    /// Driving-range table: capacity / consumption rate across speeds
    RangeTable {
        /// Battery capacity in kWh (repeatable)
        #[arg(long = "capacity", value_name = "KWH")]
        capacities: Vec<f64>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();

    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()?;
    }

    let (mut config, base) = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    if cli.strict {
        config.strict = true;
    }
    if let Some(workers) = cli.workers {
        config.workers = Some(workers);
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.monte_carlo.seed = seed;
        if let Some(scenario) = &mut config.scenario {
            scenario.seed = seed;
        }
    }

    match &cli.command {
        Command::Gen { preset } => {
            let mut params = match (&config.scenario, preset) {
                (Some(params), _) => params.clone(),
                (None, Preset::Desk) => ScenarioParams::desk_default(),
                (None, Preset::Uniform) => ScenarioParams::uniform(),
                (None, Preset::LongHaul) => ScenarioParams::long_haul(42),
            };
            if let Some(seed) = cli.seed {
                params.seed = seed;
            }
            commands::cmd_gen(&config, &base, &params)
        }
        Command::Validate => commands::cmd_validate(&config, &base),
        Command::Estimate => commands::cmd_estimate(&config, &base),
        Command::Density => commands::cmd_density(&config, &base),
        Command::Epc => commands::cmd_epc(&config, &base),
        Command::RangeTable { capacities } => commands::cmd_range_table(&config, &base, capacities),
    }
}
