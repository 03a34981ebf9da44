//! Post-processing toolkit for link-resolved regional travel simulations.
//!
//! Given the five standard simulator export tables (links, nodes, per-link
//! 15-minute speed profiles, legs, routes), this crate computes per-trip
//! electric-vehicle energy consumption with two estimators (trip-average-speed
//! and link-by-link), locates where travelers' cumulative energy crosses
//! battery-capacity thresholds, bins those crossings into a 1 km hexagonal
//! demand-density grid, and runs a seeded Monte Carlo analysis of fuel and
//! CO2 removed from a designated community link set under partial EV adoption.
//!
//! A deterministic synthetic scenario generator ([`scenario`]) produces
//! desk-scale datasets in the same five-table format for testing and
//! benchmarking.

pub mod curve;
pub mod data_model;
pub mod density;
pub mod epc;
pub mod estimators;
pub mod scenario;
pub mod units;

pub use curve::{CurveConfig, CurveKind, RateCurve};
pub use data_model::{
    Leg, Link, NetworkDataset, Node, RouteAssignment, SpeedProfile, ValidationMode,
};
pub use density::{CrossingEvent, HexBinCounts, HexGrid, ThresholdConfig};
pub use epc::{EpcLinkSet, MonteCarloConfig, SimulationSummary};
pub use estimators::{ComparisonStats, LegEstimate, LinkTraversal, TraversalOptions};
