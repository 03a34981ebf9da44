//! Subcommand implementations. Each command loads what it needs through the
//! run config, does its work via the library crate, writes outputs under the
//! configured directory, and prints a short summary.

use anyhow::{bail, Context, Result};
use std::fs;
use std::path::{Path, PathBuf};

use evdemand::curve::RateCurve;
use evdemand::data_model::{
    parse_legs, parse_links, parse_nodes, parse_routes, parse_speed_profiles, BuildWarning,
    NetworkDataset, ValidationMode,
};
use evdemand::density::{
    aggregate_density, export_density, track_all, ExportFormat, HexGrid, ThresholdConfig,
    TrackingOptions,
};
use evdemand::epc::{run_monte_carlo, EpcLinkSet};
use evdemand::estimators::{
    compare_estimates, estimate_all, write_comparison_csv, TraversalOptions,
};
use evdemand::scenario::{
    epc_center_link_ids, generate_scenario, placeholder_energy_curve, placeholder_fuel_curve,
    ScenarioParams,
};
use evdemand::units::{mph_to_mps, mps_to_mph, METERS_PER_MILE};

use crate::config::RunConfig;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn load_dataset(
    config: &RunConfig,
    base: &Path,
    mode: ValidationMode,
) -> Result<(NetworkDataset, Vec<BuildWarning>)> {
    let t = &config.tables;
    let nodes_path = config.resolve(base, &t.nodes);
    let links_path = config.resolve(base, &t.links);
    let speeds_path = config.resolve(base, &t.speeds);
    let legs_path = config.resolve(base, &t.legs);
    let routes_path = config.resolve(base, &t.routes);

    let nodes = parse_nodes(&read(&nodes_path)?)
        .with_context(|| format!("parsing {}", nodes_path.display()))?;
    let links = parse_links(&read(&links_path)?)
        .with_context(|| format!("parsing {}", links_path.display()))?;
    let speeds = parse_speed_profiles(&read(&speeds_path)?)
        .with_context(|| format!("parsing {}", speeds_path.display()))?;
    let legs = parse_legs(&read(&legs_path)?)
        .with_context(|| format!("parsing {}", legs_path.display()))?;
    let routes = parse_routes(&read(&routes_path)?)
        .with_context(|| format!("parsing {}", routes_path.display()))?;

    let (dataset, warnings) = NetworkDataset::build(nodes, links, speeds, legs, routes, mode)
        .context("building dataset")?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    Ok((dataset, warnings))
}

fn out_path(config: &RunConfig, base: &Path, name: &str) -> PathBuf {
    config.resolve(base, &config.out_dir).join(name)
}

fn mode(config: &RunConfig) -> ValidationMode {
    if config.strict {
        ValidationMode::Strict
    } else {
        ValidationMode::Lenient
    }
}

fn traversal_opts(config: &RunConfig) -> TraversalOptions {
    TraversalOptions {
        min_speed_floor: config.min_speed_floor,
    }
}

/// Writes the five tables plus curves, a community link set, and a ready-made
/// run config into the output directory.
pub fn cmd_gen(config: &RunConfig, base: &Path, params: &ScenarioParams) -> Result<()> {
    let files = generate_scenario(params)?;
    let dir = config.resolve(base, &config.out_dir);
    fs::create_dir_all(&dir)?;

    write(&dir.join("nodes.csv"), &files.nodes_csv)?;
    write(&dir.join("links.csv"), &files.links_csv)?;
    write(&dir.join("speeds.csv"), &files.speeds_csv)?;
    write(&dir.join("legs.csv"), &files.legs_csv)?;
    write(&dir.join("routes.csv"), &files.routes_csv)?;

    let energy = serde_json::to_string_pretty(&placeholder_energy_curve())?;
    let fuel = serde_json::to_string_pretty(&placeholder_fuel_curve())?;
    write(&dir.join("energy_curve.json"), &energy)?;
    write(&dir.join("fuel_curve.json"), &fuel)?;

    let epc_ids = epc_center_link_ids(params);
    let mut epc_csv = String::from("link_id\n");
    for id in &epc_ids {
        epc_csv.push_str(&format!("{id}\n"));
    }
    write(&dir.join("epc_links.csv"), &epc_csv)?;

    let run_config = RunConfig {
        out_dir: ".".into(),
        scenario: Some(params.clone()),
        monte_carlo: config.monte_carlo.clone(),
        strict: config.strict,
        workers: config.workers,
        min_speed_floor: config.min_speed_floor,
        thresholds_wh: config.thresholds_wh.clone(),
        hex: config.hex,
        range_capacities_kwh: config.range_capacities_kwh.clone(),
        ..RunConfig::default()
    };
    write(
        &dir.join("run-config.json"),
        &serde_json::to_string_pretty(&run_config)?,
    )?;

    let n_legs = files.legs_csv.lines().count() - 1;
    println!(
        "generated {}x{} grid scenario: {} persons, {n_legs} legs, {} community links -> {}",
        params.rows,
        params.cols,
        params.n_persons,
        epc_ids.len(),
        dir.display()
    );
    Ok(())
}

pub fn cmd_validate(config: &RunConfig, base: &Path) -> Result<()> {
    let (dataset, warnings) = load_dataset(config, base, mode(config))?;
    println!(
        "dataset ok: {} nodes, {} links, {} speed profiles, {} legs, {} routes, {} persons ({} warnings)",
        dataset.node_count(),
        dataset.link_count(),
        dataset.profile_count(),
        dataset.leg_count(),
        dataset.route_count(),
        dataset.person_count(),
        warnings.len()
    );
    Ok(())
}

pub fn cmd_estimate(config: &RunConfig, base: &Path) -> Result<()> {
    let (dataset, _) = load_dataset(config, base, mode(config))?;
    let curve = RateCurve::from_file(config.resolve(base, &config.energy_curve))?;
    let opts = traversal_opts(config);

    let bulk = estimate_all(&dataset, &curve, &opts)?;
    if bulk.n_unrouted + bulk.n_zero_duration > 0 {
        eprintln!(
            "warning: skipped {} unrouted and {} zero-duration legs",
            bulk.n_unrouted, bulk.n_zero_duration
        );
    }
    let pairs: Vec<(f64, f64)> = bulk
        .comparisons
        .iter()
        .map(|c| (c.rom, c.granular))
        .collect();
    let stats = compare_estimates(&pairs)?;

    write(
        &out_path(config, base, "comparison.csv"),
        &write_comparison_csv(&bulk.comparisons),
    )?;
    let summary = serde_json::json!({
        "n_trips": stats.n_pairs,
        "n_skipped": stats.n_skipped,
        "mean_ratio": stats.mean_ratio,
        "fraction_within_20pct": stats.fraction_within_band(0.2),
        "fraction_at_or_below_plus_20pct": stats.fraction_at_or_below(0.2),
    });
    write(
        &out_path(config, base, "comparison_summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;

    println!(
        "estimated {} trips: mean granular/trip-average ratio {:.4}, {:.1}% within the 20% band",
        stats.n_pairs,
        stats.mean_ratio,
        100.0 * stats.fraction_within_band(0.2)
    );
    Ok(())
}

pub fn cmd_density(config: &RunConfig, base: &Path) -> Result<()> {
    let (dataset, _) = load_dataset(config, base, mode(config))?;
    let curve = RateCurve::from_file(config.resolve(base, &config.energy_curve))?;
    let thresholds = ThresholdConfig::new(config.thresholds_wh.clone())?;
    let (origin_lon, origin_lat) = match (config.hex.origin_lon, config.hex.origin_lat) {
        (Some(lon), Some(lat)) => (lon, lat),
        _ => dataset
            .node_centroid()
            .context("cannot default the projection origin: dataset has no nodes")?,
    };
    let grid = HexGrid::new(origin_lon, origin_lat, config.hex.cell_width_m);
    let opts = TrackingOptions {
        traversal: traversal_opts(config),
        reset_per_leg: false,
    };

    let events = track_all(&dataset, &curve, &thresholds, &opts)?;
    let counts = aggregate_density(&events, &grid);

    for &threshold in &thresholds.thresholds_wh {
        let layer = counts.filter_threshold(threshold);
        let events_at = events
            .iter()
            .filter(|e| e.threshold_wh == threshold)
            .count() as u64;
        anyhow::ensure!(
            layer.total(threshold) == events_at,
            "hexbin conservation violated at {threshold} Wh"
        );
        let name = format!("density_{}wh", threshold as u64);
        write(
            &out_path(config, base, &format!("{name}.geojson")),
            &export_density(&layer, &grid, ExportFormat::GeoJson)?,
        )?;
        write(
            &out_path(config, base, &format!("{name}.csv")),
            &export_density(&layer, &grid, ExportFormat::Csv)?,
        )?;
        println!(
            "threshold {:>6.0} Wh: {} crossings in {} cells",
            threshold,
            events_at,
            layer.cells(threshold).map_or(0, |c| c.len())
        );
    }
    Ok(())
}

pub fn cmd_epc(config: &RunConfig, base: &Path) -> Result<()> {
    let (dataset, _) = load_dataset(config, base, mode(config))?;
    let fuel_curve = RateCurve::from_file(config.resolve(base, &config.fuel_curve))?;
    let energy_curve = if config.monte_carlo.apply_min_energy_filter {
        Some(RateCurve::from_file(
            config.resolve(base, &config.energy_curve),
        )?)
    } else {
        None
    };

    let epc_path = config.resolve(base, &config.epc_links);
    let text = read(&epc_path)?;
    let label = epc_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "epc".to_string());
    let epc = if epc_path
        .extension()
        .is_some_and(|e| e == "geojson" || e == "json")
    {
        EpcLinkSet::from_geojson(label, &text)?
    } else {
        EpcLinkSet::from_csv(label, &text)?
    };
    epc.validate_against(&dataset)?;

    let summary = run_monte_carlo(
        &dataset,
        &epc,
        &config.monte_carlo,
        &fuel_curve,
        energy_curve.as_ref(),
        &traversal_opts(config),
    )?;

    write(
        &out_path(config, base, "epc_summary.json"),
        &summary.to_summary_json(),
    )?;
    write(
        &out_path(config, base, "epc_iterations.csv"),
        &summary.write_iterations_csv(),
    )?;

    println!(
        "{} iterations at penetration {:.0}%: fuel removed {:.1} L (std {:.1}, min {:.1}, max {:.1}); CO2 {:.4} t",
        config.monte_carlo.iterations,
        100.0 * config.monte_carlo.penetration,
        summary.mean_liters,
        summary.std_liters,
        summary.min_liters,
        summary.max_liters,
        summary.mean_co2_tons
    );
    Ok(())
}

/// Diagnostic: driving range (miles) by speed for each battery capacity.
pub fn cmd_range_table(config: &RunConfig, base: &Path, capacities_kwh: &[f64]) -> Result<()> {
    let capacities = if capacities_kwh.is_empty() {
        config.range_capacities_kwh.clone()
    } else {
        capacities_kwh.to_vec()
    };
    for &cap in &capacities {
        if cap <= 0.0 {
            bail!("battery capacity must be positive, got {cap} kWh");
        }
    }
    let curve = RateCurve::from_file(config.resolve(base, &config.energy_curve))?;

    let lo = mps_to_mph(curve.min_speed()).ceil() as i64;
    let hi = mps_to_mph(curve.max_speed()).floor() as i64;
    let mut out = String::from("speed_mph");
    for cap in &capacities {
        out.push_str(&format!(",range_mi_{cap}kwh"));
    }
    out.push('\n');
    for mph in lo..=hi {
        let rate_per_m = curve.eval_rate(mph_to_mps(mph as f64))?;
        out.push_str(&mph.to_string());
        for &cap in &capacities {
            let range_mi = cap * 1000.0 / (rate_per_m * METERS_PER_MILE);
            out.push_str(&format!(",{range_mi:.1}"));
        }
        out.push('\n');
    }
    write(&out_path(config, base, "range_table.csv"), &out)?;
    println!(
        "range table over {}..{} mph for {} capacities -> range_table.csv",
        lo,
        hi,
        capacities.len()
    );
    Ok(())
}
