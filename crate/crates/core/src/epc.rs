//! Monte Carlo estimation of fuel and CO2 removed from a designated
//! community link set when a fixed fraction of eligible travelers switch to
//! battery-electric vehicles.
//!
//! Eligibility is a closed 300-mile cap on a person's total routed distance.
//! Each iteration assigns EVs to `floor(penetration x n_eligible)` persons,
//! drawn uniformly without replacement from a ChaCha stream keyed by
//! (seed, iteration index), so iterations are reproducible and independent of
//! thread scheduling. Sampling takes the first k entries of a seeded
//! permutation, which makes samples nested across penetration levels under a
//! shared seed. A sampled person electrifies all of their legs; a leg counts
//! when its route touches any community link, and by default contributes its
//! entire fuel, not just the in-community portion.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::HashSet;
use thiserror::Error;

use crate::curve::{CurveKind, RateCurve};
use crate::data_model::NetworkDataset;
use crate::estimators::{traverse_route, EstimateError, TraversalOptions};
use crate::units::{meters_to_miles, CO2_TONS_PER_GALLON, LITERS_PER_GALLON};

#[derive(Debug, Error)]
pub enum EpcError {
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("community link set is empty")]
    EmptyLinkSet,
    #[error("community link set references links absent from the network: {}", format_ids(.0))]
    UnknownLinks(Vec<u64>),
    #[error("no eligible persons to sample from")]
    EmptyEligibleSet,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("expected a fuel curve, got {0:?}")]
    WrongCurveKind(CurveKind),
    #[error("the minimum-trip-energy filter needs an energy curve")]
    MissingEnergyCurve,
    #[error("fuel volume must be non-negative, got {0}")]
    NegativeFuel(f64),
    #[error("link set file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("link set geojson: {0}")]
    GeoJson(String),
}

fn format_ids(ids: &[u64]) -> String {
    ids.iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Links designating an equity priority community area.
#[derive(Debug, Clone)]
pub struct EpcLinkSet {
    pub label: String,
    link_ids: HashSet<u64>,
}

impl EpcLinkSet {
    pub fn new(label: impl Into<String>, link_ids: HashSet<u64>) -> Result<Self, EpcError> {
        if link_ids.is_empty() {
            return Err(EpcError::EmptyLinkSet);
        }
        Ok(Self {
            label: label.into(),
            link_ids,
        })
    }

    /// One `link_id` column, header row required.
    pub fn from_csv(label: impl Into<String>, text: &str) -> Result<Self, EpcError> {
        let mut ids = HashSet::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let id: u64 = line.parse().map_err(|_| EpcError::Parse {
                line: i + 1,
                message: format!("not a link id: {line:?}"),
            })?;
            ids.insert(id);
        }
        Self::new(label, ids)
    }

    /// FeatureCollection with a numeric `link_id` property per feature.
    pub fn from_geojson(label: impl Into<String>, text: &str) -> Result<Self, EpcError> {
        let doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| EpcError::GeoJson(e.to_string()))?;
        let features = doc["features"]
            .as_array()
            .ok_or_else(|| EpcError::GeoJson("missing features array".to_string()))?;
        let mut ids = HashSet::new();
        for (i, feature) in features.iter().enumerate() {
            let id = feature["properties"]["link_id"].as_u64().ok_or_else(|| {
                EpcError::GeoJson(format!("feature {i} lacks a link_id property"))
            })?;
            ids.insert(id);
        }
        Self::new(label, ids)
    }

    /// Errors with the full list of ids the network does not contain.
    pub fn validate_against(&self, dataset: &NetworkDataset) -> Result<(), EpcError> {
        let mut missing: Vec<u64> = self
            .link_ids
            .iter()
            .copied()
            .filter(|id| dataset.link(*id).is_none())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            missing.sort_unstable();
            Err(EpcError::UnknownLinks(missing))
        }
    }

    pub fn contains(&self, link_id: u64) -> bool {
        self.link_ids.contains(&link_id)
    }

    pub fn len(&self) -> usize {
        self.link_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.link_ids.is_empty()
    }

    pub fn ids_sorted(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.link_ids.iter().copied().collect();
        ids.sort_unstable();
        ids
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    /// Fraction of eligible persons assigned EVs each iteration.
    pub penetration: f64,
    /// Closed eligibility bound on a person's total routed miles.
    pub max_total_miles: f64,
    pub iterations: u64,
    pub seed: u64,
    /// Trip-energy floor (Wh) used when the optional filter is on.
    pub min_trip_energy_wh: f64,
    /// Require trips to meet `min_trip_energy_wh` (needs an energy curve).
    pub apply_min_energy_filter: bool,
    /// Count only fuel burned on community links instead of whole-trip fuel.
    pub epc_segment_only: bool,
    pub histogram_bins: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            penetration: 0.37,
            max_total_miles: 300.0,
            iterations: 1000,
            seed: 0,
            min_trip_energy_wh: 10_000.0,
            apply_min_energy_filter: false,
            epc_segment_only: false,
            histogram_bins: 30,
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<(), EpcError> {
        if !(0.0..=1.0).contains(&self.penetration) {
            return Err(EpcError::InvalidConfig(format!(
                "penetration {} outside [0, 1]",
                self.penetration
            )));
        }
        if self.iterations < 1 {
            return Err(EpcError::InvalidConfig(
                "iterations must be >= 1".to_string(),
            ));
        }
        if self.max_total_miles <= 0.0 {
            return Err(EpcError::InvalidConfig(format!(
                "max_total_miles {} must be positive",
                self.max_total_miles
            )));
        }
        if self.histogram_bins < 1 {
            return Err(EpcError::InvalidConfig(
                "histogram_bins must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Sum of a person's routed leg lengths in miles; unrouted legs contribute 0.
pub fn person_total_distance(dataset: &NetworkDataset, person_id: u64) -> f64 {
    let Some(leg_ids) = dataset.person_legs(person_id) else {
        return 0.0;
    };
    let meters: f64 = leg_ids
        .iter()
        .filter_map(|&leg_id| dataset.leg_route_length(leg_id).ok())
        .sum();
    meters_to_miles(meters)
}

/// Persons whose total routed distance is at most the configured cap
/// (closed bound: exactly the cap is still eligible). Sorted by person id.
pub fn eligible_persons(dataset: &NetworkDataset, config: &MonteCarloConfig) -> Vec<u64> {
    dataset
        .person_ids_sorted()
        .into_iter()
        .filter(|&pid| person_total_distance(dataset, pid) <= config.max_total_miles)
        .collect()
}

/// True when any route link belongs to the community set.
pub fn trip_passes_epc(route: &[u64], epc: &EpcLinkSet) -> bool {
    route.iter().any(|id| epc.contains(*id))
}

/// Whole-trip fuel in liters via the granular estimator.
pub fn trip_fuel(
    dataset: &NetworkDataset,
    leg_id: u64,
    fuel_curve: &RateCurve,
    opts: &TraversalOptions,
) -> Result<f64, EpcError> {
    if fuel_curve.kind() != CurveKind::Fuel {
        return Err(EpcError::WrongCurveKind(fuel_curve.kind()));
    }
    let rt = traverse_route(dataset, leg_id, fuel_curve, opts)?;
    Ok(rt.total_energy)
}

/// Fuel burned on community links only (the segment-only sensitivity mode).
pub fn trip_fuel_in_epc(
    dataset: &NetworkDataset,
    leg_id: u64,
    fuel_curve: &RateCurve,
    epc: &EpcLinkSet,
    opts: &TraversalOptions,
) -> Result<f64, EpcError> {
    if fuel_curve.kind() != CurveKind::Fuel {
        return Err(EpcError::WrongCurveKind(fuel_curve.kind()));
    }
    let rt = traverse_route(dataset, leg_id, fuel_curve, opts)?;
    Ok(rt
        .traversals
        .iter()
        .filter(|t| epc.contains(t.link_id))
        .map(|t| t.energy)
        .sum())
}

/// Precomputed per-person community fuel, shared by all iterations.
#[derive(Debug, Clone)]
pub struct PersonEpcFuel {
    pub person_id: u64,
    pub fuel_liters: f64,
    pub qualifying_trips: u64,
}

#[derive(Debug, Clone)]
pub struct EpcFuelTable {
    persons: Vec<PersonEpcFuel>,
}

impl EpcFuelTable {
    pub fn persons(&self) -> &[PersonEpcFuel] {
        &self.persons
    }

    pub fn eligible_count(&self) -> usize {
        self.persons.len()
    }

    /// Deterministic total over every eligible person.
    pub fn total_fuel_liters(&self) -> f64 {
        self.persons.iter().map(|p| p.fuel_liters).sum()
    }
}

/// Evaluates community fuel for every eligible person. A person's entry sums
/// fuel over their legs whose routes touch the community set (optionally only
/// trips meeting the minimum-energy filter; optionally only the in-community
/// route segments).
pub fn build_fuel_table(
    dataset: &NetworkDataset,
    epc: &EpcLinkSet,
    config: &MonteCarloConfig,
    fuel_curve: &RateCurve,
    energy_curve: Option<&RateCurve>,
    opts: &TraversalOptions,
) -> Result<EpcFuelTable, EpcError> {
    config.validate()?;
    epc.validate_against(dataset)?;
    if fuel_curve.kind() != CurveKind::Fuel {
        return Err(EpcError::WrongCurveKind(fuel_curve.kind()));
    }
    if config.apply_min_energy_filter && energy_curve.is_none() {
        return Err(EpcError::MissingEnergyCurve);
    }
    let eligible = eligible_persons(dataset, config);
    let persons: Vec<PersonEpcFuel> = eligible
        .par_iter()
        .map(|&person_id| {
            let mut fuel = 0.0;
            let mut trips = 0u64;
            for &leg_id in dataset.person_legs(person_id).unwrap() {
                let Some(route) = dataset.route(leg_id) else {
                    continue;
                };
                if !trip_passes_epc(route, epc) {
                    continue;
                }
                if let Some(curve) = energy_curve.filter(|_| config.apply_min_energy_filter) {
                    let rt = traverse_route(dataset, leg_id, curve, opts)?;
                    if rt.total_energy < config.min_trip_energy_wh {
                        continue;
                    }
                }
                fuel += if config.epc_segment_only {
                    trip_fuel_in_epc(dataset, leg_id, fuel_curve, epc, opts)?
                } else {
                    trip_fuel(dataset, leg_id, fuel_curve, opts)?
                };
                trips += 1;
            }
            Ok(PersonEpcFuel {
                person_id,
                fuel_liters: fuel,
                qualifying_trips: trips,
            })
        })
        .collect::<Result<_, EpcError>>()?;
    Ok(EpcFuelTable { persons })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationResult {
    pub iteration: u64,
    pub ev_person_count: usize,
    pub qualifying_trip_count: u64,
    pub fuel_removed_liters: f64,
}

/// First `k` entries of a permutation of `0..n` seeded by (seed, iteration),
/// returned sorted so downstream sums have a canonical order.
fn sample_person_indices(n: usize, k: usize, seed: u64, iteration: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    indices.truncate(k);
    indices.sort_unstable();
    indices
}

/// One EV-assignment draw: samples `floor(penetration x n)` persons and sums
/// their community fuel.
pub fn run_iteration(
    table: &EpcFuelTable,
    config: &MonteCarloConfig,
    iteration: u64,
) -> Result<IterationResult, EpcError> {
    let n = table.persons.len();
    if n == 0 {
        return Err(EpcError::EmptyEligibleSet);
    }
    let k = (config.penetration * n as f64).floor() as usize;
    let sampled = sample_person_indices(n, k, config.seed, iteration);
    let mut fuel = 0.0;
    let mut trips = 0u64;
    for idx in &sampled {
        let p = &table.persons[*idx];
        fuel += p.fuel_liters;
        trips += p.qualifying_trips;
    }
    Ok(IterationResult {
        iteration,
        ev_person_count: k,
        qualifying_trip_count: trips,
        fuel_removed_liters: fuel,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges spanning [min, max] of the observations.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn from_values(values: &[f64], bins: usize) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            return Self {
                edges: vec![min, max],
                counts: vec![values.len() as u64],
            };
        }
        let width = (max - min) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| min + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            let idx = (((v - min) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Self { edges, counts }
    }
}

/// Distribution of fuel removed across iterations, with CO2 equivalents.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub iterations: Vec<IterationResult>,
    pub mean_liters: f64,
    /// Population standard deviation (exactly 0 for degenerate draws).
    pub std_liters: f64,
    pub min_liters: f64,
    pub max_liters: f64,
    pub histogram: Histogram,
    /// Fuel mean converted to CO2.
    pub mean_co2_tons: f64,
    /// Mean of the per-iteration CO2 values; coincides with `mean_co2_tons`
    /// up to rounding because the conversion is linear.
    pub co2_distribution_mean_tons: f64,
}

impl SimulationSummary {
    /// Summary JSON without the per-iteration payload (that goes to CSV).
    pub fn to_summary_json(&self) -> String {
        serde_json::to_string_pretty(&json!({
            "mean_liters": self.mean_liters,
            "std_liters": self.std_liters,
            "min": self.min_liters,
            "max": self.max_liters,
            "histogram": { "edges": self.histogram.edges, "counts": self.histogram.counts },
            "mean_co2_tons": self.mean_co2_tons,
            "co2_distribution_mean_tons": self.co2_distribution_mean_tons,
        }))
        .expect("summary serializes")
    }

    pub fn write_iterations_csv(&self) -> String {
        let mut out =
            String::from("iteration,ev_person_count,qualifying_trip_count,fuel_removed_liters\n");
        for it in &self.iterations {
            out.push_str(&format!(
                "{},{},{},{}\n",
                it.iteration, it.ev_person_count, it.qualifying_trip_count, it.fuel_removed_liters
            ));
        }
        out
    }
}

/// Runs the full simulation: precompute the fuel table, execute iterations in
/// parallel on independent RNG streams, and summarize in iteration order.
pub fn run_monte_carlo(
    dataset: &NetworkDataset,
    epc: &EpcLinkSet,
    config: &MonteCarloConfig,
    fuel_curve: &RateCurve,
    energy_curve: Option<&RateCurve>,
    opts: &TraversalOptions,
) -> Result<SimulationSummary, EpcError> {
    let table = build_fuel_table(dataset, epc, config, fuel_curve, energy_curve, opts)?;
    summarize_iterations(&table, config)
}

/// Iteration + summary phase, reusable once a fuel table exists.
pub fn summarize_iterations(
    table: &EpcFuelTable,
    config: &MonteCarloConfig,
) -> Result<SimulationSummary, EpcError> {
    config.validate()?;
    let iterations: Vec<IterationResult> = (0..config.iterations)
        .into_par_iter()
        .map(|i| run_iteration(table, config, i))
        .collect::<Result<_, _>>()?;
    // collected in index order; statistics below are therefore canonical.
    // Welford keeps the mean exact (and the variance exactly zero) when every
    // iteration returns the same total, as full penetration does.
    let values: Vec<f64> = iterations.iter().map(|r| r.fuel_removed_liters).collect();
    let n = values.len() as f64;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for (i, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let variance = m2 / n;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let histogram = Histogram::from_values(&values, config.histogram_bins);
    let mean_co2 = fuel_to_co2(mean)?;
    let co2_mean = {
        let mut acc = 0.0;
        for &v in &values {
            acc += fuel_to_co2(v)?;
        }
        acc / n
    };
    Ok(SimulationSummary {
        iterations,
        mean_liters: mean,
        std_liters: variance.sqrt(),
        min_liters: min,
        max_liters: max,
        histogram,
        mean_co2_tons: mean_co2,
        co2_distribution_mean_tons: co2_mean,
    })
}

/// Gasoline volume to metric tons of CO2: liters -> gallons -> 0.008887 t/gal.
pub fn fuel_to_co2(liters: f64) -> Result<f64, EpcError> {
    if liters < 0.0 {
        return Err(EpcError::NegativeFuel(liters));
    }
    Ok(liters / LITERS_PER_GALLON * CO2_TONS_PER_GALLON)
}
