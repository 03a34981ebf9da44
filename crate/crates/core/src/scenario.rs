//! Deterministic synthetic scenario generator.
//!
//! Produces the five export tables for a rectangular grid road network with
//! bidirectional links, 96-bin speed profiles with configurable AM/PM
//! congestion dips, and persons driving chained multi-leg itineraries routed
//! along shortest-hop grid paths. Every output parses cleanly in strict mode,
//! and a fixed seed yields byte-identical files.
//!
//! Congestion severity alternates by link parity (odd links dip only halfway)
//! so that trips during a peak mix speeds across links rather than slowing
//! uniformly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::curve::{CurveConfig, CurveKind, RateUnit, SpeedUnit};
use crate::data_model::{
    write_legs, write_links, write_nodes, write_routes, write_speed_profiles, Leg, Link, Node,
    SpeedProfile,
};
use crate::units::{bin_for_clock, BINS_PER_DAY, SECONDS_PER_DAY};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("infeasible params: {0}")]
    Infeasible(String),
}

/// One congestion dip: speeds multiply by `factor` for bins in
/// `[start_bin, end_bin]` (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionDip {
    pub start_bin: usize,
    pub end_bin: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub rows: usize,
    pub cols: usize,
    pub link_length_m: f64,
    pub free_speed_mps: f64,
    /// Every Nth row and column becomes a fast corridor at
    /// `highway_speed_mps`; None keeps one speed everywhere.
    pub highway_every: Option<usize>,
    pub highway_speed_mps: f64,
    pub n_persons: usize,
    /// Inclusive range of legs per person.
    pub legs_per_person: (usize, usize),
    pub dips: Vec<CongestionDip>,
    /// First leg departs uniformly within this window, whole seconds.
    pub first_leg_window_s: (u64, u64),
    /// Dwell between consecutive legs, whole seconds, inclusive.
    pub dwell_range_s: (u64, u64),
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self::desk_default()
    }
}

impl ScenarioParams {
    /// Desk-scale default: 20x20 grid with fast corridors every 5th row and
    /// column, 10,000 persons, ~25,000 legs, AM and PM congestion dips.
    pub fn desk_default() -> Self {
        Self {
            rows: 20,
            cols: 20,
            link_length_m: 200.0,
            free_speed_mps: 14.0,
            highway_every: Some(5),
            highway_speed_mps: 30.0,
            n_persons: 10_000,
            legs_per_person: (2, 3),
            dips: vec![
                CongestionDip {
                    start_bin: 28,
                    end_bin: 39,
                    factor: 0.3,
                }, // 07:00-10:00
                CongestionDip {
                    start_bin: 64,
                    end_bin: 75,
                    factor: 0.45,
                }, // 16:00-19:00
            ],
            first_leg_window_s: (21_600, 32_400), // 06:00-09:00
            dwell_range_s: (1_800, 5_400),
            seed: 42,
        }
    }

    /// Free-flow variant with one speed everywhere: every profile bin equals
    /// the single free speed, and recorded durations equal route length /
    /// free speed exactly (link length and speed chosen so per-link times
    /// are centisecond-exact).
    pub fn uniform() -> Self {
        Self {
            dips: Vec::new(),
            highway_every: None,
            free_speed_mps: 16.0,
            ..Self::desk_default()
        }
    }

    /// Long trips that accumulate tens of kWh, for threshold-crossing work.
    pub fn long_haul(seed: u64) -> Self {
        Self {
            rows: 16,
            cols: 16,
            link_length_m: 2_000.0,
            free_speed_mps: 18.0,
            highway_every: Some(4),
            highway_speed_mps: 30.0,
            n_persons: 400,
            legs_per_person: (4, 6),
            dips: vec![CongestionDip {
                start_bin: 36,
                end_bin: 47,
                factor: 0.6,
            }],
            first_leg_window_s: (18_000, 25_200), // 05:00-07:00
            dwell_range_s: (600, 1_800),
            seed,
        }
    }

    fn min_dip_factor(&self) -> f64 {
        self.dips.iter().map(|d| d.factor).fold(1.0, f64::min)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.rows * self.cols < 2 {
            return Err(ScenarioError::Infeasible(format!(
                "{}x{} grid has no links",
                self.rows, self.cols
            )));
        }
        if self.link_length_m <= 0.0 || self.free_speed_mps <= 0.0 {
            return Err(ScenarioError::Infeasible(
                "link length and free speed must be positive".to_string(),
            ));
        }
        if self.highway_every == Some(0) {
            return Err(ScenarioError::Infeasible(
                "highway_every must be >= 1".to_string(),
            ));
        }
        if self.highway_every.is_some() && self.highway_speed_mps < self.free_speed_mps {
            return Err(ScenarioError::Infeasible(
                "highway speed below the base free speed".to_string(),
            ));
        }
        if self.n_persons < 1 {
            return Err(ScenarioError::Infeasible(
                "need at least one person".to_string(),
            ));
        }
        let (lo, hi) = self.legs_per_person;
        if lo < 1 || lo > hi {
            return Err(ScenarioError::Infeasible(format!(
                "bad legs_per_person range ({lo}, {hi})"
            )));
        }
        for dip in &self.dips {
            if dip.start_bin > dip.end_bin || dip.end_bin >= BINS_PER_DAY {
                return Err(ScenarioError::Infeasible(format!(
                    "dip bins ({}, {}) outside 0..{BINS_PER_DAY}",
                    dip.start_bin, dip.end_bin
                )));
            }
            if dip.factor <= 0.0 || dip.factor > 1.0 {
                return Err(ScenarioError::Infeasible(format!(
                    "dip factor {} outside (0, 1]",
                    dip.factor
                )));
            }
        }
        if self.first_leg_window_s.0 > self.first_leg_window_s.1
            || self.dwell_range_s.0 > self.dwell_range_s.1
        {
            return Err(ScenarioError::Infeasible("empty time window".to_string()));
        }
        // worst-case itinerary must finish before midnight
        let max_hops = (self.rows - 1 + self.cols - 1).max(1) as f64;
        let slowest = self.free_speed_mps * self.min_dip_factor();
        let worst_leg = max_hops * self.link_length_m / slowest;
        let worst_end = self.first_leg_window_s.1 as f64
            + self.legs_per_person.1 as f64 * (worst_leg + self.dwell_range_s.1 as f64);
        // leave centisecond headroom so formatted end times never round to 24:00
        if worst_end >= SECONDS_PER_DAY - 0.01 {
            return Err(ScenarioError::Infeasible(format!(
                "worst-case itinerary ends at {worst_end:.0}s, past midnight; \
                 shorten trips, dwell, or the departure window"
            )));
        }
        Ok(())
    }
}

/// The five generated tables as CSV documents.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFiles {
    pub nodes_csv: String,
    pub links_csv: String,
    pub speeds_csv: String,
    pub legs_csv: String,
    pub routes_csv: String,
}

struct GridNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
    /// (from_node, to_node) -> link id
    link_between: HashMap<(u64, u64), u64>,
}

const GRID_ORIGIN_LON: f64 = -122.0;
const GRID_ORIGIN_LAT: f64 = 37.4;

fn node_id(r: usize, c: usize, cols: usize) -> u64 {
    (r * cols + c + 1) as u64
}

fn build_grid(params: &ScenarioParams) -> GridNetwork {
    let (rows, cols) = (params.rows, params.cols);
    let dlat = params.link_length_m / crate::units::METERS_PER_DEGREE;
    let dlon = params.link_length_m
        / (crate::units::METERS_PER_DEGREE * GRID_ORIGIN_LAT.to_radians().cos());
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(Node {
                node_id: node_id(r, c, cols),
                lon: GRID_ORIGIN_LON + c as f64 * dlon,
                lat: GRID_ORIGIN_LAT - r as f64 * dlat,
                elev: ((r * 31 + c * 17) % 50) as f64,
            });
        }
    }
    // a link running along a fast corridor gets the highway speed
    let corridor = |index: usize| {
        params
            .highway_every
            .is_some_and(|every| index.is_multiple_of(every))
    };
    let mut links = Vec::new();
    let mut link_between = HashMap::new();
    let mut next_link = 1u64;
    let mut add_pair =
        |a: u64, b: u64, fast: bool, links: &mut Vec<Link>, map: &mut HashMap<(u64, u64), u64>| {
            let free_speed = if fast {
                params.highway_speed_mps
            } else {
                params.free_speed_mps
            };
            for (from, to) in [(a, b), (b, a)] {
                links.push(Link {
                    link_id: next_link,
                    node_id_in: from,
                    node_id_out: to,
                    free_speed,
                    length: params.link_length_m,
                    capacity: if fast { 3600.0 } else { 1800.0 },
                });
                map.insert((from, to), next_link);
                next_link += 1;
            }
        };
    for r in 0..rows {
        for c in 0..cols {
            let here = node_id(r, c, cols);
            if c + 1 < cols {
                add_pair(
                    here,
                    node_id(r, c + 1, cols),
                    corridor(r),
                    &mut links,
                    &mut link_between,
                );
            }
            if r + 1 < rows {
                add_pair(
                    here,
                    node_id(r + 1, c, cols),
                    corridor(c),
                    &mut links,
                    &mut link_between,
                );
            }
        }
    }
    GridNetwork {
        nodes,
        links,
        link_between,
    }
}

/// Dip multiplier for a bin; odd links congest only halfway.
fn speed_factor(params: &ScenarioParams, link_id: u64, bin: usize) -> f64 {
    let mut factor = 1.0f64;
    for dip in &params.dips {
        if (dip.start_bin..=dip.end_bin).contains(&bin) {
            factor = factor.min(dip.factor);
        }
    }
    if factor < 1.0 && link_id % 2 == 1 {
        factor = (factor + 1.0) / 2.0;
    }
    factor
}

/// Shortest-hop path: walk rows first, then columns.
fn route_between(
    grid: &GridNetwork,
    cols: usize,
    from: (usize, usize),
    to: (usize, usize),
) -> Vec<u64> {
    let mut path = Vec::new();
    let (mut r, mut c) = from;
    while r != to.0 {
        let next = if to.0 > r { r + 1 } else { r - 1 };
        path.push(grid.link_between[&(node_id(r, c, cols), node_id(next, c, cols))]);
        r = next;
    }
    while c != to.1 {
        let next = if to.1 > c { c + 1 } else { c - 1 };
        path.push(grid.link_between[&(node_id(r, c, cols), node_id(r, next, cols))]);
        c = next;
    }
    path
}

/// Clock-stepped travel time over a route, entry-bin speeds per link.
fn simulate_duration(
    params: &ScenarioParams,
    grid: &GridNetwork,
    route: &[u64],
    start: f64,
) -> f64 {
    let mut clock = start;
    for &link_id in route {
        // link ids are assigned densely from 1
        let free = grid.links[(link_id - 1) as usize].free_speed;
        let speed = free * speed_factor(params, link_id, bin_for_clock(clock));
        clock += params.link_length_m / speed;
    }
    clock - start
}

/// Generates the five tables. Deterministic for a fixed seed.
pub fn generate_scenario(params: &ScenarioParams) -> Result<ScenarioFiles, ScenarioError> {
    params.validate()?;
    let grid = build_grid(params);
    let (rows, cols) = (params.rows, params.cols);

    let mut profiles = HashMap::with_capacity(grid.links.len());
    for link in &grid.links {
        let mut speeds = [0.0; BINS_PER_DAY];
        for (bin, slot) in speeds.iter_mut().enumerate() {
            *slot = link.free_speed * speed_factor(params, link.link_id, bin);
        }
        profiles.insert(
            link.link_id,
            SpeedProfile {
                link_id: link.link_id,
                speeds,
            },
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut legs = Vec::new();
    let mut routes = HashMap::new();
    let mut leg_id = 0u64;
    for person_id in 1..=params.n_persons as u64 {
        let n_legs = rng.random_range(params.legs_per_person.0..=params.legs_per_person.1);
        let mut clock =
            rng.random_range(params.first_leg_window_s.0..=params.first_leg_window_s.1) as f64;
        let mut here = (rng.random_range(0..rows), rng.random_range(0..cols));
        for _ in 0..n_legs {
            let mut dest = here;
            while dest == here {
                dest = (rng.random_range(0..rows), rng.random_range(0..cols));
            }
            let route = route_between(&grid, cols, here, dest);
            let duration = simulate_duration(params, &grid, &route, clock);
            legs.push(Leg {
                leg_id,
                person_id,
                orig_node: node_id(here.0, here.1, cols),
                dest_node: node_id(dest.0, dest.1, cols),
                start_time: clock,
                end_time: clock + duration,
                duration,
            });
            routes.insert(leg_id, route);
            leg_id += 1;
            clock +=
                duration + rng.random_range(params.dwell_range_s.0..=params.dwell_range_s.1) as f64;
            here = dest;
        }
    }

    Ok(ScenarioFiles {
        nodes_csv: write_nodes(&grid.nodes),
        links_csv: write_links(&grid.links),
        speeds_csv: write_speed_profiles(&profiles),
        legs_csv: write_legs(&legs),
        routes_csv: write_routes(&routes),
    })
}

/// Links whose endpoints both sit within a small block around the grid
/// center: the synthetic stand-in for a community link set.
pub fn epc_center_link_ids(params: &ScenarioParams) -> Vec<u64> {
    let grid = build_grid(params);
    let (rows, cols) = (params.rows, params.cols);
    let center = (rows / 2, cols / 2);
    let radius = (rows.min(cols) / 6).max(1);
    let near = |id: u64| {
        let idx = (id - 1) as usize;
        let (r, c) = (idx / cols, idx % cols);
        r.abs_diff(center.0) <= radius && c.abs_diff(center.1) <= radius
    };
    let mut ids: Vec<u64> = grid
        .links
        .iter()
        .filter(|l| near(l.node_id_in) && near(l.node_id_out))
        .map(|l| l.link_id)
        .collect();
    ids.sort_unstable();
    ids
}

/// Synthetic sedan energy curve used for tests and generated run configs.
/// Knots sample the usual rate shape (constant auxiliary draw over distance
/// at crawl speeds, minimum in the mid-30s mph, aerodynamic rise at highway
/// speeds: roughly a/v + b + c v^2). They are placeholders and do not
/// reproduce any vendor's measured data.
pub fn placeholder_energy_curve() -> CurveConfig {
    CurveConfig {
        kind: CurveKind::Energy,
        speed_unit: SpeedUnit::Mph,
        rate_unit: RateUnit::WhPerMile,
        knots: vec![
            (3.0, 970.0),
            (5.0, 651.0),
            (8.0, 472.0),
            (12.0, 374.0),
            (18.0, 312.0),
            (25.0, 283.0),
            (35.0, 273.0),
            (45.0, 280.0),
            (55.0, 298.0),
            (65.0, 325.0),
            (75.0, 360.0),
        ],
    }
}

/// Synthetic gasoline-sedan fuel curve; same shape and placeholder caveat as
/// the energy curve.
pub fn placeholder_fuel_curve() -> CurveConfig {
    CurveConfig {
        kind: CurveKind::Fuel,
        speed_unit: SpeedUnit::Mph,
        rate_unit: RateUnit::LitersPer100Km,
        knots: vec![
            (3.0, 30.0),
            (5.0, 20.0),
            (8.0, 14.5),
            (12.0, 11.2),
            (18.0, 9.3),
            (25.0, 8.3),
            (35.0, 7.8),
            (45.0, 8.0),
            (55.0, 8.6),
            (65.0, 9.6),
            (75.0, 10.9),
        ],
    }
}
