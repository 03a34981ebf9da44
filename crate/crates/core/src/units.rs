//! Unit conversion constants. Canonical internal units are meters, seconds,
//! m/s, Wh, and liters; conversions happen once at configuration boundaries.

/// International mile in meters.
pub const METERS_PER_MILE: f64 = 1609.344;

/// One mile per hour in meters per second.
pub const MPS_PER_MPH: f64 = 0.44704;

/// Meters per degree of latitude (and of longitude at the equator) for the
/// local equirectangular projection. Distance distortion stays below 0.5%
/// over a 100 km metro extent at mid latitudes, far under the 1 km bin size.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// US liquid gallon in liters.
pub const LITERS_PER_GALLON: f64 = 3.785_411_784;

/// Metric tons of CO2 emitted per gallon of gasoline combusted
/// (8,887 g/gal, EPA/NHTSA 2010 joint rulemaking factor).
pub const CO2_TONS_PER_GALLON: f64 = 0.008_887;

/// Length of one speed-profile bin in seconds (15 minutes).
pub const SECONDS_PER_BIN: f64 = 900.0;

/// Number of 15-minute speed bins covering one day (00:00–23:45).
pub const BINS_PER_DAY: usize = 96;

/// Seconds in one day.
pub const SECONDS_PER_DAY: f64 = 86_400.0;

pub fn mph_to_mps(mph: f64) -> f64 {
    mph * MPS_PER_MPH
}

pub fn mps_to_mph(mps: f64) -> f64 {
    mps / MPS_PER_MPH
}

pub fn meters_to_miles(m: f64) -> f64 {
    m / METERS_PER_MILE
}

/// 15-minute bin index containing a clock time, wrapping past midnight so
/// traversals that run beyond 24:00 reuse the single-day profile.
pub fn bin_for_clock(clock_seconds: f64) -> usize {
    let bin = (clock_seconds / SECONDS_PER_BIN).floor() as i64;
    bin.rem_euclid(BINS_PER_DAY as i64) as usize
}
