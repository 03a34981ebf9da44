//! Charging-demand density: tracks each person's cumulative energy across
//! their chronological legs, records where that total first reaches each
//! battery-capacity threshold, and aggregates the crossing points into a
//! pointy-top hexagonal grid (default 1 km flat-to-flat cells).
//!
//! Cumulative energy never resets within the day — no recharging between
//! legs is assumed. The crossing location is the downstream node of the link
//! that pushed the total over the threshold; at 1 km bin size, sub-link
//! precision is immaterial.

use ordered_float::OrderedFloat;
use rayon::prelude::*;
use serde_json::json;
use std::collections::BTreeMap;
use std::str::FromStr;
use thiserror::Error;

use crate::curve::RateCurve;
use crate::data_model::NetworkDataset;
use crate::estimators::{traverse_route, EstimateError, TraversalOptions};
use crate::units::METERS_PER_DEGREE;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("unknown person {0}")]
    UnknownPerson(u64),
    #[error("thresholds must be a non-empty, strictly ascending, positive sequence: {0}")]
    InvalidThresholds(String),
    #[error("unknown export format {0:?} (expected \"geojson\" or \"csv\")")]
    UnknownFormat(String),
    #[error("density csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// Battery-capacity levels to monitor, in Wh, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdConfig {
    pub thresholds_wh: Vec<f64>,
}

impl Default for ThresholdConfig {
    /// 10 kWh steps from 10 kWh to 50 kWh.
    fn default() -> Self {
        Self {
            thresholds_wh: vec![10_000.0, 20_000.0, 30_000.0, 40_000.0, 50_000.0],
        }
    }
}

impl ThresholdConfig {
    pub fn new(thresholds_wh: Vec<f64>) -> Result<Self, DensityError> {
        let config = Self { thresholds_wh };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), DensityError> {
        if self.thresholds_wh.is_empty() {
            return Err(DensityError::InvalidThresholds("empty".to_string()));
        }
        for (i, &t) in self.thresholds_wh.iter().enumerate() {
            if !t.is_finite() || t <= 0.0 {
                return Err(DensityError::InvalidThresholds(format!(
                    "value {t} at index {i}"
                )));
            }
            if i > 0 && t <= self.thresholds_wh[i - 1] {
                return Err(DensityError::InvalidThresholds(format!(
                    "{t} at index {i} does not exceed {}",
                    self.thresholds_wh[i - 1]
                )));
            }
        }
        Ok(())
    }
}

/// The first link traversal at which a person's cumulative energy reached a
/// threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingEvent {
    pub person_id: u64,
    pub threshold_wh: f64,
    /// Link whose traversal pushed the total over the threshold.
    pub link_id: u64,
    /// Downstream node of the crossing link.
    pub lon: f64,
    pub lat: f64,
    /// Simulated clock at entry to the crossing link, seconds since midnight.
    pub clock: f64,
    /// Cumulative energy immediately after the crossing link, Wh.
    pub cumulative_energy_wh: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrackingOptions {
    pub traversal: TraversalOptions,
    /// Sensitivity mode: restart the accumulator (and the crossed-threshold
    /// set) at every leg, so each trip is scored in isolation.
    pub reset_per_leg: bool,
}

/// Walks one person's legs in start-time order, accumulating link energies
/// and emitting at most one event per threshold (per leg in reset mode).
/// Exact equality with a threshold counts as crossed. Legs without a route
/// contribute nothing.
pub fn track_person(
    dataset: &NetworkDataset,
    person_id: u64,
    curve: &RateCurve,
    thresholds: &ThresholdConfig,
    opts: &TrackingOptions,
) -> Result<Vec<CrossingEvent>, DensityError> {
    thresholds.validate()?;
    let leg_ids = dataset
        .person_legs(person_id)
        .ok_or(DensityError::UnknownPerson(person_id))?;
    let levels = &thresholds.thresholds_wh;
    let mut events = Vec::new();
    let mut cumulative = 0.0f64;
    let mut next_level = 0usize; // thresholds below this index are crossed

    for &leg_id in leg_ids {
        if opts.reset_per_leg {
            cumulative = 0.0;
            next_level = 0;
        }
        if dataset.route(leg_id).is_none() {
            continue;
        }
        let rt = traverse_route(dataset, leg_id, curve, &opts.traversal)?;
        for t in &rt.traversals {
            cumulative += t.energy;
            while next_level < levels.len() && cumulative >= levels[next_level] {
                let link = dataset.link(t.link_id).expect("validated link");
                let node = dataset.node(link.node_id_out).expect("validated node");
                events.push(CrossingEvent {
                    person_id,
                    threshold_wh: levels[next_level],
                    link_id: t.link_id,
                    lon: node.lon,
                    lat: node.lat,
                    clock: t.entry_time,
                    cumulative_energy_wh: cumulative,
                });
                next_level += 1;
            }
        }
    }
    Ok(events)
}

/// Tracks every person in parallel. Events are ordered by person id, then
/// chronologically within a person, independent of worker count.
pub fn track_all(
    dataset: &NetworkDataset,
    curve: &RateCurve,
    thresholds: &ThresholdConfig,
    opts: &TrackingOptions,
) -> Result<Vec<CrossingEvent>, DensityError> {
    thresholds.validate()?;
    let person_ids = dataset.person_ids_sorted();
    let per_person: Vec<Vec<CrossingEvent>> = person_ids
        .par_iter()
        .map(|&pid| track_person(dataset, pid, curve, thresholds, opts))
        .collect::<Result<_, _>>()?;
    Ok(per_person.into_iter().flatten().collect())
}

/// Equirectangular projection onto a local tangent plane, meters.
pub fn project_to_local(lon: f64, lat: f64, origin_lon: f64, origin_lat: f64) -> (f64, f64) {
    let x = (lon - origin_lon) * origin_lat.to_radians().cos() * METERS_PER_DEGREE;
    let y = (lat - origin_lat) * METERS_PER_DEGREE;
    (x, y)
}

/// Pointy-top hexagonal grid over the local projection plane.
///
/// `cell_width_m` is the flat-to-flat hexagon width (the horizontal span of
/// a pointy-top cell), so the circumradius is `width / sqrt(3)`.
#[derive(Debug, Clone, Copy)]
pub struct HexGrid {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub cell_width_m: f64,
}

impl HexGrid {
    pub fn new(origin_lon: f64, origin_lat: f64, cell_width_m: f64) -> Self {
        Self {
            origin_lon,
            origin_lat,
            cell_width_m,
        }
    }

    /// Corner-to-center distance.
    pub fn circumradius(&self) -> f64 {
        self.cell_width_m / SQRT3
    }

    pub fn project(&self, lon: f64, lat: f64) -> (f64, f64) {
        project_to_local(lon, lat, self.origin_lon, self.origin_lat)
    }

    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        let lon = self.origin_lon + x / (self.origin_lat.to_radians().cos() * METERS_PER_DEGREE);
        let lat = self.origin_lat + y / METERS_PER_DEGREE;
        (lon, lat)
    }

    /// Center of cell (q, r) in local meters.
    pub fn hex_center(&self, q: i64, r: i64) -> (f64, f64) {
        let radius = self.circumradius();
        let x = radius * SQRT3 * (q as f64 + r as f64 / 2.0);
        let y = radius * 1.5 * r as f64;
        (x, y)
    }

    /// Axial cell containing a local-plane point: nearest hex center, with
    /// exact boundary ties broken toward the lexicographically smaller (q, r).
    pub fn hex_index(&self, x: f64, y: f64) -> (i64, i64) {
        let radius = self.circumradius();
        let qf = (SQRT3 / 3.0 * x - y / 3.0) / radius;
        let rf = (2.0 / 3.0 * y) / radius;
        let (q0, r0) = cube_round(qf, rf);
        // Rounding alone lands in the nearest cell except exactly on a
        // boundary; scanning the immediate neighborhood pins the tie rule
        // down in floating point.
        let mut best = (q0, r0);
        let mut best_d2 = self.center_dist2(q0, r0, x, y);
        for (dq, dr) in AXIAL_NEIGHBORS {
            let cand = (q0 + dq, r0 + dr);
            let d2 = self.center_dist2(cand.0, cand.1, x, y);
            if d2 < best_d2 || (d2 == best_d2 && cand < best) {
                best = cand;
                best_d2 = d2;
            }
        }
        best
    }

    fn center_dist2(&self, q: i64, r: i64, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.hex_center(q, r);
        (x - cx) * (x - cx) + (y - cy) * (y - cy)
    }

    /// Cell polygon in lon/lat: 6 corners at 30 + 60k degrees, counterclockwise.
    pub fn hex_corners_lonlat(&self, q: i64, r: i64) -> [(f64, f64); 6] {
        let (cx, cy) = self.hex_center(q, r);
        let radius = self.circumradius();
        std::array::from_fn(|k| {
            let angle = (30.0 + 60.0 * k as f64).to_radians();
            self.unproject(cx + radius * angle.cos(), cy + radius * angle.sin())
        })
    }
}

const AXIAL_NEIGHBORS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

fn cube_round(qf: f64, rf: f64) -> (i64, i64) {
    let xf = qf;
    let zf = rf;
    let yf = -xf - zf;
    let mut x = xf.round();
    let mut z = zf.round();
    let y = yf.round();
    let dx = (x - xf).abs();
    let dy = (y - yf).abs();
    let dz = (z - zf).abs();
    if dx > dy && dx > dz {
        x = -y - z;
    } else if dz > dy {
        z = -x - y;
    }
    (x as i64, z as i64)
}

/// Per-threshold event counts over hex cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HexBinCounts {
    per_threshold: BTreeMap<OrderedFloat<f64>, BTreeMap<(i64, i64), u64>>,
}

impl HexBinCounts {
    pub fn thresholds(&self) -> Vec<f64> {
        self.per_threshold.keys().map(|k| k.0).collect()
    }

    pub fn cells(&self, threshold_wh: f64) -> Option<&BTreeMap<(i64, i64), u64>> {
        self.per_threshold.get(&OrderedFloat(threshold_wh))
    }

    /// Total events recorded for a threshold.
    pub fn total(&self, threshold_wh: f64) -> u64 {
        self.cells(threshold_wh)
            .map(|cells| cells.values().sum())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.per_threshold.is_empty()
    }

    /// Counts restricted to a single threshold.
    pub fn filter_threshold(&self, threshold_wh: f64) -> HexBinCounts {
        let mut out = HexBinCounts::default();
        if let Some(cells) = self.cells(threshold_wh) {
            out.per_threshold
                .insert(OrderedFloat(threshold_wh), cells.clone());
        }
        out
    }

    fn insert(&mut self, threshold_wh: f64, cell: (i64, i64), count: u64) {
        *self
            .per_threshold
            .entry(OrderedFloat(threshold_wh))
            .or_default()
            .entry(cell)
            .or_insert(0) += count;
    }
}

/// Groups crossing events by threshold, then by hex cell.
pub fn aggregate_density(events: &[CrossingEvent], grid: &HexGrid) -> HexBinCounts {
    let mut counts = HexBinCounts::default();
    for event in events {
        let (x, y) = grid.project(event.lon, event.lat);
        let cell = grid.hex_index(x, y);
        counts.insert(event.threshold_wh, cell, 1);
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    GeoJson,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = DensityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "geojson" => Ok(ExportFormat::GeoJson),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(DensityError::UnknownFormat(other.to_string())),
        }
    }
}

/// Serializes counts as a GeoJSON FeatureCollection (one closed hexagon
/// polygon per occupied cell) or as CSV rows.
pub fn export_density(
    counts: &HexBinCounts,
    grid: &HexGrid,
    format: ExportFormat,
) -> Result<String, DensityError> {
    match format {
        ExportFormat::GeoJson => Ok(export_geojson(counts, grid)),
        ExportFormat::Csv => Ok(export_csv(counts, grid)),
    }
}

fn export_geojson(counts: &HexBinCounts, grid: &HexGrid) -> String {
    let mut features = Vec::new();
    for (threshold, cells) in &counts.per_threshold {
        for (&(q, r), &count) in cells {
            let corners = grid.hex_corners_lonlat(q, r);
            let mut ring: Vec<Vec<f64>> =
                corners.iter().map(|&(lon, lat)| vec![lon, lat]).collect();
            ring.push(ring[0].clone());
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring] },
                "properties": {
                    "threshold_wh": threshold.0,
                    "count": count,
                    "q": q,
                    "r": r,
                },
            }));
        }
    }
    serde_json::to_string_pretty(&json!({
        "type": "FeatureCollection",
        "features": features,
    }))
    .expect("geojson value serializes")
}

fn export_csv(counts: &HexBinCounts, grid: &HexGrid) -> String {
    let mut out = String::from("threshold_wh,q,r,center_lon,center_lat,count\n");
    for (threshold, cells) in &counts.per_threshold {
        for (&(q, r), &count) in cells {
            let (x, y) = grid.hex_center(q, r);
            let (lon, lat) = grid.unproject(x, y);
            out.push_str(&format!("{},{q},{r},{lon},{lat},{count}\n", threshold.0));
        }
    }
    out
}

/// Reads back a density CSV (as written by [`export_density`]) into counts.
pub fn import_density_csv(text: &str) -> Result<HexBinCounts, DensityError> {
    let mut counts = HexBinCounts::default();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(DensityError::Csv {
                line: line_no,
                message: format!("expected 6 columns, found {}", cols.len()),
            });
        }
        let parse = |v: &str, what: &str| -> Result<f64, DensityError> {
            v.trim().parse().map_err(|_| DensityError::Csv {
                line: line_no,
                message: format!("bad {what}: {v:?}"),
            })
        };
        let threshold = parse(cols[0], "threshold")?;
        let q = parse(cols[1], "q")? as i64;
        let r = parse(cols[2], "r")? as i64;
        let count = parse(cols[5], "count")? as u64;
        counts.insert(threshold, (q, r), count);
    }
    Ok(counts)
}
