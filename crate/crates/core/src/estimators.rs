//! Per-leg consumption estimators.
//!
//! Two methods share one rate curve:
//!
//! * the trip-average method evaluates the curve once at the leg's overall
//!   average speed (route length / recorded duration) and multiplies by the
//!   route length;
//! * the granular method walks the route with a simulated clock, reading each
//!   link's 15-minute-bin average speed at the moment the traveler enters the
//!   link, and sums per-link energies.
//!
//! The bin in effect at link entry governs the whole link. The granular
//! method never consults the leg's recorded end time; its simulated duration
//! is reported alongside the recorded one as a diagnostic.

use rayon::prelude::*;
use thiserror::Error;

use crate::curve::{CurveError, RateCurve};
use crate::data_model::{DatasetError, Leg, NetworkDataset};
use crate::units::bin_for_clock;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("leg {0} has zero duration; average speed undefined")]
    ZeroDuration(u64),
    #[error("no pairs to compare")]
    EmptyComparison,
    #[error("no comparable pairs remain after skipping non-positive baselines")]
    AllPairsSkipped,
}

/// Traversal of one route link by one traveler.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTraversal {
    pub link_id: u64,
    /// Simulated clock at link entry, seconds since midnight.
    pub entry_time: f64,
    /// Speed used for the whole link, m/s (profile bin value or free-speed
    /// fallback, floored at the minimum-speed option).
    pub speed_used: f64,
    pub traversal_time: f64,
    /// Link length x rate(speed_used); Wh for energy curves, liters for fuel.
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMethod {
    Rom,
    Granular,
}

#[derive(Debug, Clone)]
pub struct LegEstimate {
    pub leg_id: u64,
    pub method: EstimateMethod,
    pub energy: f64,
    /// Per-link detail; empty for the trip-average method.
    pub traversals: Vec<LinkTraversal>,
    /// Clock time spent traversing, granular only.
    pub simulated_duration: Option<f64>,
}

/// Full result of walking a route with the simulated clock.
#[derive(Debug, Clone)]
pub struct RouteTraversal {
    pub traversals: Vec<LinkTraversal>,
    /// Links that had no speed profile and fell back to free speed.
    pub missing_profile_links: Vec<u64>,
    pub total_energy: f64,
    pub simulated_duration: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TraversalOptions {
    /// Lower bound applied to every speed before computing traversal time,
    /// so stalled links cannot produce infinite times. m/s.
    pub min_speed_floor: f64,
}

impl Default for TraversalOptions {
    fn default() -> Self {
        Self {
            min_speed_floor: 0.1,
        }
    }
}

/// Average speed over the leg: route length / recorded duration.
pub fn leg_average_speed(dataset: &NetworkDataset, leg_id: u64) -> Result<f64, EstimateError> {
    let leg = dataset
        .leg(leg_id)
        .ok_or(DatasetError::UnknownLeg(leg_id))?;
    if leg.duration <= 0.0 {
        return Err(EstimateError::ZeroDuration(leg_id));
    }
    Ok(dataset.leg_route_length(leg_id)? / leg.duration)
}

/// Trip-average estimate: route length x rate(average speed).
pub fn estimate_rom(
    dataset: &NetworkDataset,
    leg_id: u64,
    curve: &RateCurve,
) -> Result<LegEstimate, EstimateError> {
    let length = dataset.leg_route_length(leg_id)?;
    let speed = leg_average_speed(dataset, leg_id)?;
    let energy = length * curve.eval_rate(speed)?;
    Ok(LegEstimate {
        leg_id,
        method: EstimateMethod::Rom,
        energy,
        traversals: Vec::new(),
        simulated_duration: None,
    })
}

/// Streams link traversals to `sink` without retaining them. Returns
/// (total energy, simulated duration, missing-profile links).
fn traverse_with(
    dataset: &NetworkDataset,
    leg: &Leg,
    route: &[u64],
    curve: &RateCurve,
    opts: &TraversalOptions,
    mut sink: impl FnMut(&LinkTraversal),
) -> Result<(f64, f64, Vec<u64>), EstimateError> {
    let mut clock = leg.start_time;
    let mut total_energy = 0.0;
    let mut missing = Vec::new();
    for &link_id in route {
        let link = dataset
            .link(link_id)
            .ok_or(DatasetError::UnknownLink(link_id))?;
        let raw_speed = match dataset.speed_profile(link_id) {
            Some(profile) => profile.speeds[bin_for_clock(clock)],
            None => {
                missing.push(link_id);
                link.free_speed
            }
        };
        let speed_used = raw_speed.max(opts.min_speed_floor);
        let traversal_time = link.length / speed_used;
        let energy = link.length * curve.eval_rate(speed_used)?;
        sink(&LinkTraversal {
            link_id,
            entry_time: clock,
            speed_used,
            traversal_time,
            energy,
        });
        total_energy += energy;
        clock += traversal_time;
    }
    Ok((total_energy, clock - leg.start_time, missing))
}

/// Walks a leg's route link by link from its start time.
pub fn traverse_route(
    dataset: &NetworkDataset,
    leg_id: u64,
    curve: &RateCurve,
    opts: &TraversalOptions,
) -> Result<RouteTraversal, EstimateError> {
    let leg = dataset
        .leg(leg_id)
        .ok_or(DatasetError::UnknownLeg(leg_id))?;
    let route = dataset
        .route(leg_id)
        .ok_or(DatasetError::MissingRoute(leg_id))?;
    let mut traversals = Vec::with_capacity(route.len());
    let (total_energy, simulated_duration, missing_profile_links) =
        traverse_with(dataset, leg, route, curve, opts, |t| {
            traversals.push(t.clone())
        })?;
    Ok(RouteTraversal {
        traversals,
        missing_profile_links,
        total_energy,
        simulated_duration,
    })
}

/// Granular estimate: sum of per-link energies along the route.
pub fn estimate_granular(
    dataset: &NetworkDataset,
    leg_id: u64,
    curve: &RateCurve,
    opts: &TraversalOptions,
) -> Result<LegEstimate, EstimateError> {
    let rt = traverse_route(dataset, leg_id, curve, opts)?;
    Ok(LegEstimate {
        leg_id,
        method: EstimateMethod::Granular,
        energy: rt.total_energy,
        traversals: rt.traversals,
        simulated_duration: Some(rt.simulated_duration),
    })
}

/// Granular total without retaining per-link detail; the bulk-pipeline path.
pub fn granular_energy(
    dataset: &NetworkDataset,
    leg_id: u64,
    curve: &RateCurve,
    opts: &TraversalOptions,
) -> Result<f64, EstimateError> {
    let leg = dataset
        .leg(leg_id)
        .ok_or(DatasetError::UnknownLeg(leg_id))?;
    let route = dataset
        .route(leg_id)
        .ok_or(DatasetError::MissingRoute(leg_id))?;
    let (total, _, _) = traverse_with(dataset, leg, route, curve, opts, |_| {})?;
    Ok(total)
}

/// Ratio statistics for paired (trip-average, granular) estimates.
#[derive(Debug, Clone)]
pub struct ComparisonStats {
    /// Pairs that entered the statistics.
    pub n_pairs: usize,
    /// Pairs skipped because the trip-average value was not positive.
    pub n_skipped: usize,
    pub mean_ratio: f64,
    ratios_sorted: Vec<f64>,
}

impl ComparisonStats {
    /// Fraction of ratios within the closed band `[1 - band, 1 + band]`.
    pub fn fraction_within_band(&self, band: f64) -> f64 {
        let lo = self.ratios_sorted.partition_point(|&r| r < 1.0 - band);
        let hi = self.ratios_sorted.partition_point(|&r| r <= 1.0 + band);
        (hi - lo) as f64 / self.n_pairs as f64
    }

    /// Fraction of ratios at or below `1 + band` (the "band-or-below" region).
    pub fn fraction_at_or_below(&self, band: f64) -> f64 {
        let hi = self.ratios_sorted.partition_point(|&r| r <= 1.0 + band);
        hi as f64 / self.n_pairs as f64
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios_sorted
    }
}

/// Computes ratio statistics over (trip-average, granular) pairs. Pairs with
/// a non-positive first element are skipped and counted.
pub fn compare_estimates(pairs: &[(f64, f64)]) -> Result<ComparisonStats, EstimateError> {
    if pairs.is_empty() {
        return Err(EstimateError::EmptyComparison);
    }
    let mut ratios: Vec<f64> = Vec::with_capacity(pairs.len());
    let mut skipped = 0usize;
    for &(rom, granular) in pairs {
        if rom > 0.0 {
            ratios.push(granular / rom);
        } else {
            skipped += 1;
        }
    }
    if ratios.is_empty() {
        return Err(EstimateError::AllPairsSkipped);
    }
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ComparisonStats {
        n_pairs: ratios.len(),
        n_skipped: skipped,
        mean_ratio,
        ratios_sorted: ratios,
    })
}

/// One leg's paired estimates, ready for CSV export.
#[derive(Debug, Clone)]
pub struct TripComparison {
    pub leg_id: u64,
    pub rom: f64,
    pub granular: f64,
    pub ratio: f64,
    pub simulated_duration: f64,
    pub recorded_duration: f64,
}

/// Bulk estimation over every usable leg.
#[derive(Debug)]
pub struct BulkEstimates {
    /// Ordered by leg id regardless of worker count.
    pub comparisons: Vec<TripComparison>,
    pub n_unrouted: usize,
    pub n_zero_duration: usize,
}

/// Runs both estimators over all legs in parallel. Legs without a route or
/// with zero recorded duration are skipped and counted; results are ordered
/// by leg id so output does not depend on scheduling.
pub fn estimate_all(
    dataset: &NetworkDataset,
    curve: &RateCurve,
    opts: &TraversalOptions,
) -> Result<BulkEstimates, EstimateError> {
    let leg_ids = dataset.leg_ids_sorted();
    let mut usable = Vec::with_capacity(leg_ids.len());
    let mut n_unrouted = 0usize;
    let mut n_zero_duration = 0usize;
    for leg_id in leg_ids {
        if dataset.route(leg_id).is_none() {
            n_unrouted += 1;
        } else if dataset.leg(leg_id).unwrap().duration <= 0.0 {
            n_zero_duration += 1;
        } else {
            usable.push(leg_id);
        }
    }
    let comparisons: Vec<TripComparison> = usable
        .par_iter()
        .map(|&leg_id| {
            let rom = estimate_rom(dataset, leg_id, curve)?;
            let granular = estimate_granular(dataset, leg_id, curve, opts)?;
            let leg = dataset.leg(leg_id).unwrap();
            Ok(TripComparison {
                leg_id,
                rom: rom.energy,
                granular: granular.energy,
                ratio: granular.energy / rom.energy,
                simulated_duration: granular.simulated_duration.unwrap(),
                recorded_duration: leg.duration,
            })
        })
        .collect::<Result<_, EstimateError>>()?;
    Ok(BulkEstimates {
        comparisons,
        n_unrouted,
        n_zero_duration,
    })
}

/// CSV export of per-leg comparisons.
pub fn write_comparison_csv(comparisons: &[TripComparison]) -> String {
    let mut out =
        String::from("leg_id,rom_wh,granular_wh,ratio,simulated_duration_s,recorded_duration_s\n");
    for c in comparisons {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.leg_id, c.rom, c.granular, c.ratio, c.simulated_duration, c.recorded_duration
        ));
    }
    out
}
