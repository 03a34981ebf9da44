//! Consumption-rate curves: rate (energy or fuel per meter) as a function of
//! speed, interpolated through configured knots with a shape-preserving
//! monotone cubic (Fritsch–Carlson slope limiting).
//!
//! An unconstrained cubic spline can overshoot between knots and produce
//! negative or otherwise non-physical rates on a consumption curve; the
//! limited Hermite form interpolates every knot exactly while staying inside
//! the rate range of each interval's endpoints. Outside the knotted speed
//! range the curve clamps to the boundary knot rate.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::units::{METERS_PER_MILE, MPS_PER_MPH};

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("curve needs at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error(
        "knot speeds must be strictly increasing: knot {index} has speed {speed} after {previous}"
    )]
    NonIncreasingSpeeds {
        index: usize,
        speed: f64,
        previous: f64,
    },
    #[error("knot {index} has non-positive rate {rate}")]
    NonPositiveRate { index: usize, rate: f64 },
    #[error("knot {index} is not finite")]
    NonFiniteKnot { index: usize },
    #[error("rate unit {rate_unit:?} does not match curve kind {kind:?}")]
    UnitKindMismatch {
        kind: CurveKind,
        rate_unit: RateUnit,
    },
    #[error("cannot evaluate rate at negative speed {0}")]
    NegativeSpeed(f64),
    #[error("curve file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("curve schema: {0}")]
    Schema(#[from] serde_json::Error),
}

/// What the curve measures: electric energy (Wh) or gasoline fuel (liters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Energy,
    Fuel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedUnit {
    #[serde(rename = "mph")]
    Mph,
    #[serde(rename = "m/s")]
    MetersPerSecond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateUnit {
    #[serde(rename = "wh_per_mile")]
    WhPerMile,
    #[serde(rename = "wh_per_meter")]
    WhPerMeter,
    #[serde(rename = "liters_per_100km")]
    LitersPer100Km,
    #[serde(rename = "liters_per_meter")]
    LitersPerMeter,
}

impl SpeedUnit {
    fn to_mps(self, v: f64) -> f64 {
        match self {
            SpeedUnit::Mph => v * MPS_PER_MPH,
            SpeedUnit::MetersPerSecond => v,
        }
    }
}

impl RateUnit {
    fn to_per_meter(self, r: f64) -> f64 {
        match self {
            RateUnit::WhPerMile => r / METERS_PER_MILE,
            RateUnit::WhPerMeter => r,
            RateUnit::LitersPer100Km => r / 100_000.0,
            RateUnit::LitersPerMeter => r,
        }
    }

    fn is_energy(self) -> bool {
        matches!(self, RateUnit::WhPerMile | RateUnit::WhPerMeter)
    }
}

/// Curve definition in user units, as read from a JSON curve file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub kind: CurveKind,
    pub speed_unit: SpeedUnit,
    pub rate_unit: RateUnit,
    /// `[speed, rate]` pairs in the declared units, ascending in speed.
    pub knots: Vec<(f64, f64)>,
}

/// One cubic segment in Horner form over `dx = speed - x0`.
#[derive(Debug, Clone, Copy)]
struct Segment {
    c0: f64,
    c1: f64,
    c2: f64,
    c3: f64,
}

/// Immutable consumption-rate curve in canonical units (m/s, per-meter rate).
/// Evaluation is pure; the curve is safe to share across threads.
#[derive(Debug, Clone)]
pub struct RateCurve {
    kind: CurveKind,
    speeds: Vec<f64>,
    rates: Vec<f64>,
    segments: Vec<Segment>,
}

impl RateCurve {
    /// Builds the curve from a config, converting knots to canonical units
    /// and fitting the monotone cubic interpolant.
    pub fn build(config: &CurveConfig) -> Result<Self, CurveError> {
        if config.rate_unit.is_energy() != matches!(config.kind, CurveKind::Energy) {
            return Err(CurveError::UnitKindMismatch {
                kind: config.kind,
                rate_unit: config.rate_unit,
            });
        }
        let speeds: Vec<f64> = config
            .knots
            .iter()
            .map(|&(s, _)| config.speed_unit.to_mps(s))
            .collect();
        let rates: Vec<f64> = config
            .knots
            .iter()
            .map(|&(_, r)| config.rate_unit.to_per_meter(r))
            .collect();
        Self::from_canonical(config.kind, speeds, rates)
    }

    /// Builds from knots already in canonical units (m/s, rate per meter).
    pub fn from_canonical(
        kind: CurveKind,
        speeds: Vec<f64>,
        rates: Vec<f64>,
    ) -> Result<Self, CurveError> {
        let n = speeds.len();
        if n < 2 {
            return Err(CurveError::TooFewKnots(n));
        }
        for i in 0..n {
            if !speeds[i].is_finite() || !rates[i].is_finite() {
                return Err(CurveError::NonFiniteKnot { index: i });
            }
            if rates[i] <= 0.0 {
                return Err(CurveError::NonPositiveRate {
                    index: i,
                    rate: rates[i],
                });
            }
            if i > 0 && speeds[i] <= speeds[i - 1] {
                return Err(CurveError::NonIncreasingSpeeds {
                    index: i,
                    speed: speeds[i],
                    previous: speeds[i - 1],
                });
            }
        }
        let segments = fit_monotone_cubic(&speeds, &rates);
        Ok(Self {
            kind,
            speeds,
            rates,
            segments,
        })
    }

    /// Reads a JSON curve file and builds the curve.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CurveError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CurveError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Parses a JSON curve document and builds the curve.
    pub fn from_json(text: &str) -> Result<Self, CurveError> {
        let config: CurveConfig = serde_json::from_str(text)?;
        Self::build(&config)
    }

    /// Interpolated consumption rate (per meter) at a speed in m/s.
    ///
    /// Speeds below the first knot return the first knot's rate, speeds above
    /// the last knot return the last knot's rate. Between knots the value is
    /// confined to the rate range of the bracketing knots.
    pub fn eval_rate(&self, speed_mps: f64) -> Result<f64, CurveError> {
        if speed_mps < 0.0 || speed_mps.is_nan() {
            return Err(CurveError::NegativeSpeed(speed_mps));
        }
        Ok(self.eval_clamped(speed_mps))
    }

    fn eval_clamped(&self, speed: f64) -> f64 {
        let n = self.speeds.len();
        if speed <= self.speeds[0] {
            return self.rates[0];
        }
        if speed >= self.speeds[n - 1] {
            return self.rates[n - 1];
        }
        // partition_point gives the first knot strictly above `speed`, so the
        // segment index is one less.
        let i = self.speeds.partition_point(|&x| x <= speed) - 1;
        let seg = &self.segments[i];
        let dx = speed - self.speeds[i];
        let v = seg.c0 + dx * (seg.c1 + dx * (seg.c2 + dx * seg.c3));
        // The limited tangents keep the cubic inside the endpoint range
        // analytically; the clamp makes the no-overshoot invariant hold in
        // floating point as well.
        let (lo, hi) = if self.rates[i] <= self.rates[i + 1] {
            (self.rates[i], self.rates[i + 1])
        } else {
            (self.rates[i + 1], self.rates[i])
        };
        v.clamp(lo, hi)
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    /// Knots in canonical units: (speed m/s, rate per meter).
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.speeds.iter().copied().zip(self.rates.iter().copied())
    }

    pub fn min_speed(&self) -> f64 {
        self.speeds[0]
    }

    pub fn max_speed(&self) -> f64 {
        *self.speeds.last().unwrap()
    }
}

/// Fritsch–Carlson tangent limiting: secant-averaged tangents, zeroed at
/// local extrema, then scaled back onto the radius-3 circle in
/// (alpha, beta) = (m_i/delta, m_{i+1}/delta) space, which is sufficient for
/// monotonicity on each interval.
fn fit_monotone_cubic(x: &[f64], y: &[f64]) -> Vec<Segment> {
    let n = x.len();
    let mut delta = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        delta.push((y[i + 1] - y[i]) / (x[i + 1] - x[i]));
    }

    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            m[i] = 0.5 * (delta[i - 1] + delta[i]);
        }
    }

    for i in 0..n - 1 {
        if delta[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let alpha = m[i] / delta[i];
        let beta = m[i + 1] / delta[i];
        let s = alpha * alpha + beta * beta;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * alpha * delta[i];
            m[i + 1] = tau * beta * delta[i];
        }
    }

    (0..n - 1)
        .map(|i| {
            let h = x[i + 1] - x[i];
            let c2 = (3.0 * delta[i] - 2.0 * m[i] - m[i + 1]) / h;
            let c3 = (m[i] + m[i + 1] - 2.0 * delta[i]) / (h * h);
            Segment {
                c0: y[i],
                c1: m[i],
                c2,
                c3,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wh_per_mile_curve(knots: &[(f64, f64)]) -> RateCurve {
        RateCurve::build(&CurveConfig {
            kind: CurveKind::Energy,
            speed_unit: SpeedUnit::Mph,
            rate_unit: RateUnit::WhPerMile,
            knots: knots.to_vec(),
        })
        .unwrap()
    }

    #[test]
    fn constant_curve_is_constant_after_conversion() {
        let curve = wh_per_mile_curve(&[(10.0, 250.0), (60.0, 250.0)]);
        let expected = 250.0 / METERS_PER_MILE; // 0.15534... Wh/m
        for v in [0.0, 4.4704, 13.0, 26.8224, 40.0] {
            let r = curve.eval_rate(v).unwrap();
            assert!((r - expected).abs() < 1e-15, "rate {r} at {v}");
        }
        assert!((expected - 0.15534).abs() < 1e-5);
    }

    #[test]
    fn interpolates_knots_exactly() {
        let curve = wh_per_mile_curve(&[(10.0, 300.0), (30.0, 220.0), (60.0, 260.0)]);
        for (v, r) in curve.knots().collect::<Vec<_>>() {
            let got = curve.eval_rate(v).unwrap();
            assert!(
                ((got - r) / r).abs() <= 1e-12,
                "knot ({v}, {r}) evaluated to {got}"
            );
        }
    }

    #[test]
    fn single_knot_rejected() {
        let err = RateCurve::build(&CurveConfig {
            kind: CurveKind::Energy,
            speed_unit: SpeedUnit::Mph,
            rate_unit: RateUnit::WhPerMile,
            knots: vec![(10.0, 250.0)],
        });
        assert!(matches!(err, Err(CurveError::TooFewKnots(1))));
    }

    #[test]
    fn decreasing_speeds_rejected() {
        let err = RateCurve::build(&CurveConfig {
            kind: CurveKind::Energy,
            speed_unit: SpeedUnit::Mph,
            rate_unit: RateUnit::WhPerMile,
            knots: vec![(10.0, 250.0), (10.0, 240.0)],
        });
        assert!(matches!(err, Err(CurveError::NonIncreasingSpeeds { .. })));
    }

    #[test]
    fn non_positive_rate_rejected() {
        let err = RateCurve::build(&CurveConfig {
            kind: CurveKind::Energy,
            speed_unit: SpeedUnit::Mph,
            rate_unit: RateUnit::WhPerMile,
            knots: vec![(10.0, 250.0), (20.0, 0.0)],
        });
        assert!(matches!(err, Err(CurveError::NonPositiveRate { .. })));
    }

    #[test]
    fn clamps_outside_domain() {
        let curve = wh_per_mile_curve(&[(10.0, 300.0), (60.0, 250.0)]);
        let first = 300.0 / METERS_PER_MILE;
        let last = 250.0 / METERS_PER_MILE;
        assert_eq!(curve.eval_rate(0.0).unwrap(), first);
        assert_eq!(curve.eval_rate(curve.min_speed() - 1e-9).unwrap(), first);
        assert_eq!(curve.eval_rate(100.0).unwrap(), last);
        assert_eq!(curve.eval_rate(curve.max_speed()).unwrap(), last);
    }

    #[test]
    fn negative_speed_errors() {
        let curve = wh_per_mile_curve(&[(10.0, 300.0), (60.0, 250.0)]);
        assert!(matches!(
            curve.eval_rate(-0.1),
            Err(CurveError::NegativeSpeed(_))
        ));
    }

    #[test]
    fn unit_kind_mismatch_rejected() {
        let err = RateCurve::build(&CurveConfig {
            kind: CurveKind::Fuel,
            speed_unit: SpeedUnit::Mph,
            rate_unit: RateUnit::WhPerMile,
            knots: vec![(10.0, 250.0), (60.0, 250.0)],
        });
        assert!(matches!(err, Err(CurveError::UnitKindMismatch { .. })));
    }

    #[test]
    fn liters_per_100km_conversion() {
        let curve = RateCurve::build(&CurveConfig {
            kind: CurveKind::Fuel,
            speed_unit: SpeedUnit::MetersPerSecond,
            rate_unit: RateUnit::LitersPer100Km,
            knots: vec![(5.0, 8.0), (30.0, 8.0)],
        })
        .unwrap();
        // 8 L/100km = 8e-5 L/m
        assert!((curve.eval_rate(10.0).unwrap() - 8.0e-5).abs() < 1e-18);
    }

    #[test]
    fn from_json_round_trip_and_schema_errors() {
        let good = r#"{
            "kind": "energy",
            "speed_unit": "mph",
            "rate_unit": "wh_per_mile",
            "knots": [[10, 300], [30, 220], [60, 260]]
        }"#;
        let curve = RateCurve::from_json(good).unwrap();
        assert_eq!(curve.knots().count(), 3);
        assert_eq!(curve.kind(), CurveKind::Energy);

        let out_of_order = r#"{
            "kind": "energy",
            "speed_unit": "mph",
            "rate_unit": "wh_per_mile",
            "knots": [[30, 220], [10, 300]]
        }"#;
        assert!(matches!(
            RateCurve::from_json(out_of_order),
            Err(CurveError::NonIncreasingSpeeds { .. })
        ));

        let bad_unit = r#"{
            "kind": "energy",
            "speed_unit": "furlongs",
            "rate_unit": "wh_per_mile",
            "knots": [[10, 300], [60, 260]]
        }"#;
        let err = RateCurve::from_json(bad_unit).unwrap_err();
        assert!(err.to_string().contains("furlongs"), "{err}");
    }

    #[test]
    fn missing_file_names_path() {
        let err = RateCurve::from_file("/nonexistent/curve.json").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/curve.json"));
    }

    /// Strictly increasing speeds paired with positive rates.
    fn knot_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        (2usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.1f64..10.0, n),
                proptest::collection::vec(1.0f64..1000.0, n),
            )
                .prop_map(|(gaps, rates)| {
                    let mut speed = 0.0;
                    gaps.into_iter()
                        .zip(rates)
                        .map(|(gap, rate)| {
                            speed += gap;
                            (speed, rate)
                        })
                        .collect()
                })
        })
    }

    proptest! {
        #[test]
        fn prop_knot_interpolation(knots in knot_strategy()) {
            let (speeds, rates): (Vec<f64>, Vec<f64>) = knots.iter().copied().unzip();
            let curve = RateCurve::from_canonical(CurveKind::Energy, speeds, rates).unwrap();
            for (v, r) in curve.knots().collect::<Vec<_>>() {
                let got = curve.eval_rate(v).unwrap();
                prop_assert!(((got - r) / r).abs() <= 1e-12);
            }
        }

        #[test]
        fn prop_no_overshoot(knots in knot_strategy(), samples in proptest::collection::vec(0.0f64..1.0, 50)) {
            let (speeds, rates): (Vec<f64>, Vec<f64>) = knots.iter().copied().unzip();
            let curve = RateCurve::from_canonical(CurveKind::Energy, speeds.clone(), rates.clone()).unwrap();
            for i in 0..speeds.len() - 1 {
                let (lo, hi) = if rates[i] <= rates[i + 1] {
                    (rates[i], rates[i + 1])
                } else {
                    (rates[i + 1], rates[i])
                };
                for &t in &samples {
                    let v = speeds[i] + t * (speeds[i + 1] - speeds[i]);
                    let r = curve.eval_rate(v).unwrap();
                    prop_assert!(r >= lo && r <= hi, "r={r} outside [{lo}, {hi}] at v={v}");
                }
            }
        }

        #[test]
        fn prop_monotone_segments(knots in knot_strategy()) {
            let (speeds, rates): (Vec<f64>, Vec<f64>) = knots.iter().copied().unzip();
            let curve = RateCurve::from_canonical(CurveKind::Energy, speeds.clone(), rates.clone()).unwrap();
            for i in 0..speeds.len() - 1 {
                let increasing = rates[i + 1] >= rates[i];
                let mut prev = curve.eval_rate(speeds[i]).unwrap();
                for k in 1..=100 {
                    let v = speeds[i] + (k as f64 / 100.0) * (speeds[i + 1] - speeds[i]);
                    let r = curve.eval_rate(v).unwrap();
                    if increasing {
                        prop_assert!(r >= prev - 1e-12 * prev.abs().max(1.0));
                    } else {
                        prop_assert!(r <= prev + 1e-12 * prev.abs().max(1.0));
                    }
                    prev = r;
                }
            }
        }

        #[test]
        fn prop_clamping(knots in knot_strategy(), below in 0.0f64..1.0, above in 0.0f64..50.0) {
            let (speeds, rates): (Vec<f64>, Vec<f64>) = knots.iter().copied().unzip();
            let curve = RateCurve::from_canonical(CurveKind::Energy, speeds.clone(), rates.clone()).unwrap();
            let v_lo = speeds[0] * below;
            let v_hi = speeds[speeds.len() - 1] + above;
            prop_assert_eq!(curve.eval_rate(v_lo).unwrap(), rates[0]);
            prop_assert_eq!(curve.eval_rate(v_hi).unwrap(), rates[rates.len() - 1]);
        }
    }
}
