//! Run configuration: one JSON document is the source of truth for a run,
//! with a handful of CLI flags layered on top. Relative paths resolve
//! against the config file's directory.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use evdemand::epc::MonteCarloConfig;
use evdemand::scenario::ScenarioParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TablePaths {
    pub nodes: PathBuf,
    pub links: PathBuf,
    pub speeds: PathBuf,
    pub legs: PathBuf,
    pub routes: PathBuf,
}

impl Default for TablePaths {
    fn default() -> Self {
        Self {
            nodes: "nodes.csv".into(),
            links: "links.csv".into(),
            speeds: "speeds.csv".into(),
            legs: "legs.csv".into(),
            routes: "routes.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct HexConfig {
    /// Flat-to-flat hexagon width in meters.
    pub cell_width_m: f64,
    /// Projection origin; defaults to the node centroid when absent.
    pub origin_lon: Option<f64>,
    pub origin_lat: Option<f64>,
}

impl Default for HexConfig {
    fn default() -> Self {
        Self {
            cell_width_m: 1000.0,
            origin_lon: None,
            origin_lat: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub tables: TablePaths,
    pub energy_curve: PathBuf,
    pub fuel_curve: PathBuf,
    pub epc_links: PathBuf,
    /// Battery thresholds in Wh for the density analysis.
    pub thresholds_wh: Vec<f64>,
    pub hex: HexConfig,
    pub monte_carlo: MonteCarloConfig,
    /// Minimum speed (m/s) substituted for slower profile entries.
    pub min_speed_floor: f64,
    pub out_dir: PathBuf,
    pub strict: bool,
    pub workers: Option<usize>,
    pub scenario: Option<ScenarioParams>,
    /// Battery capacities (kWh) for the range-table diagnostic.
    pub range_capacities_kwh: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tables: TablePaths::default(),
            energy_curve: "energy_curve.json".into(),
            fuel_curve: "fuel_curve.json".into(),
            epc_links: "epc_links.csv".into(),
            thresholds_wh: vec![10_000.0, 20_000.0, 30_000.0, 40_000.0, 50_000.0],
            hex: HexConfig::default(),
            monte_carlo: MonteCarloConfig::default(),
            min_speed_floor: 0.1,
            out_dir: "out".into(),
            strict: false,
            workers: None,
            scenario: None,
            range_capacities_kwh: vec![10.0, 20.0, 30.0, 40.0, 50.0],
        }
    }
}

impl RunConfig {
    /// Loads the config and remembers its directory for path resolution.
    pub fn load(path: &Path) -> anyhow::Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("parsing config {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((config, base))
    }

    pub fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }
}
