//! Plain-text codecs for the five export tables.
//!
//! All tables are UTF-8, comma-separated, one header row, columns in the
//! canonical order. Route lists are written as `[id, id, ...]` in a single
//! unquoted column, so that table gets a dedicated parser instead of a
//! generic CSV reader. Numbers are written with Rust's shortest round-trip
//! float formatting, so write-then-parse reproduces every field exactly.

use std::collections::HashMap;
use thiserror::Error;

use super::{Leg, Link, Node, SpeedProfile, DURATION_TOLERANCE_S};
use crate::units::BINS_PER_DAY;

/// Parse failure with the 1-based line number in the file (line 1 is the
/// header row).
#[derive(Debug, Error)]
pub enum TableError {
    #[error("missing header row")]
    MissingHeader,
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: column {column} is not a number: {value:?}")]
    InvalidNumber {
        line: usize,
        column: usize,
        value: String,
    },
    #[error("line {line}: invalid time {value:?} (expected HH:MM:SS.ss)")]
    InvalidTime { line: usize, value: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

fn invalid(line: usize, message: impl Into<String>) -> TableError {
    TableError::Invalid {
        line,
        message: message.into(),
    }
}

/// Iterates data rows, skipping blank lines, yielding (line_number, line).
fn data_rows(text: &str) -> Result<impl Iterator<Item = (usize, &str)>, TableError> {
    let mut lines = text.lines();
    if lines.next().is_none() {
        return Err(TableError::MissingHeader);
    }
    Ok(lines
        .enumerate()
        .map(|(i, l)| (i + 2, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty()))
}

fn parse_u64(line: usize, column: usize, field: &str) -> Result<u64, TableError> {
    field.trim().parse().map_err(|_| TableError::InvalidNumber {
        line,
        column,
        value: field.trim().to_string(),
    })
}

fn parse_f64(line: usize, column: usize, field: &str) -> Result<f64, TableError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| TableError::InvalidNumber {
            line,
            column,
            value: field.trim().to_string(),
        })?;
    if !v.is_finite() {
        return Err(TableError::InvalidNumber {
            line,
            column,
            value: field.trim().to_string(),
        });
    }
    Ok(v)
}

fn split_columns(line_no: usize, line: &str, expected: usize) -> Result<Vec<&str>, TableError> {
    let cols: Vec<&str> = line.split(',').collect();
    if cols.len() != expected {
        return Err(TableError::ColumnCount {
            line: line_no,
            expected,
            found: cols.len(),
        });
    }
    Ok(cols)
}

/// Parses `HH:MM:SS.ss` into fractional seconds since midnight.
pub fn parse_time(value: &str) -> Option<f64> {
    let mut parts = value.trim().split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let s_field = parts.next()?;
    if parts.next().is_some() || h > 23 || m > 59 {
        return None;
    }
    let s: f64 = s_field.parse().ok()?;
    if !(0.0..60.0).contains(&s) {
        return None;
    }
    Some(f64::from(h) * 3600.0 + f64::from(m) * 60.0 + s)
}

/// Formats fractional seconds since midnight as `HH:MM:SS.ss`, rounding to
/// centiseconds first so no field ever reads 60.
pub fn format_time(seconds: f64) -> String {
    let total_cs = (seconds * 100.0).round() as u64;
    let h = total_cs / 360_000;
    let m = total_cs / 6_000 % 60;
    let s = total_cs / 100 % 60;
    let cs = total_cs % 100;
    format!("{h:02}:{m:02}:{s:02}.{cs:02}")
}

fn time_field(line: usize, field: &str) -> Result<f64, TableError> {
    parse_time(field).ok_or_else(|| TableError::InvalidTime {
        line,
        value: field.trim().to_string(),
    })
}

pub fn parse_nodes(text: &str) -> Result<Vec<Node>, TableError> {
    let mut nodes = Vec::new();
    let mut seen = HashMap::new();
    for (line_no, line) in data_rows(text)? {
        let cols = split_columns(line_no, line, 4)?;
        let node_id = parse_u64(line_no, 1, cols[0])?;
        let lon = parse_f64(line_no, 2, cols[1])?;
        let lat = parse_f64(line_no, 3, cols[2])?;
        let elev = parse_f64(line_no, 4, cols[3])?;
        if !(-180.0..=180.0).contains(&lon) {
            return Err(invalid(
                line_no,
                format!("node {node_id}: lon {lon} out of range [-180, 180]"),
            ));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(invalid(
                line_no,
                format!("node {node_id}: lat {lat} out of range [-90, 90]"),
            ));
        }
        if let Some(prev) = seen.insert(node_id, line_no) {
            return Err(invalid(
                line_no,
                format!("duplicate node_id {node_id} (first at line {prev})"),
            ));
        }
        nodes.push(Node {
            node_id,
            lon,
            lat,
            elev,
        });
    }
    Ok(nodes)
}

pub fn parse_links(text: &str) -> Result<Vec<Link>, TableError> {
    let mut links = Vec::new();
    let mut seen = HashMap::new();
    for (line_no, line) in data_rows(text)? {
        let cols = split_columns(line_no, line, 6)?;
        let link_id = parse_u64(line_no, 1, cols[0])?;
        let node_id_in = parse_u64(line_no, 2, cols[1])?;
        let node_id_out = parse_u64(line_no, 3, cols[2])?;
        let free_speed = parse_f64(line_no, 4, cols[3])?;
        let length = parse_f64(line_no, 5, cols[4])?;
        let capacity = parse_f64(line_no, 6, cols[5])?;
        if length <= 0.0 {
            return Err(invalid(
                line_no,
                format!("link {link_id}: non-positive length {length}"),
            ));
        }
        if free_speed <= 0.0 {
            return Err(invalid(
                line_no,
                format!("link {link_id}: non-positive free_speed {free_speed}"),
            ));
        }
        if let Some(prev) = seen.insert(link_id, line_no) {
            return Err(invalid(
                line_no,
                format!("duplicate link_id {link_id} (first at line {prev})"),
            ));
        }
        links.push(Link {
            link_id,
            node_id_in,
            node_id_out,
            free_speed,
            length,
            capacity,
        });
    }
    Ok(links)
}

pub fn parse_speed_profiles(text: &str) -> Result<HashMap<u64, SpeedProfile>, TableError> {
    let mut profiles = HashMap::new();
    for (line_no, line) in data_rows(text)? {
        let cols = split_columns(line_no, line, BINS_PER_DAY + 1)?;
        let link_id = parse_u64(line_no, 1, cols[0])?;
        let mut speeds = [0.0; BINS_PER_DAY];
        for (i, field) in cols[1..].iter().enumerate() {
            let v = parse_f64(line_no, i + 2, field)?;
            if v < 0.0 {
                return Err(invalid(
                    line_no,
                    format!("link {link_id}: negative speed {v} in bin {i}"),
                ));
            }
            speeds[i] = v;
        }
        if profiles
            .insert(link_id, SpeedProfile { link_id, speeds })
            .is_some()
        {
            return Err(invalid(
                line_no,
                format!("duplicate link_id {link_id} in speed table"),
            ));
        }
    }
    Ok(profiles)
}

pub fn parse_legs(text: &str) -> Result<Vec<Leg>, TableError> {
    let mut legs = Vec::new();
    let mut seen = HashMap::new();
    for (line_no, line) in data_rows(text)? {
        let cols = split_columns(line_no, line, 7)?;
        let leg_id = parse_u64(line_no, 1, cols[0])?;
        let person_id = parse_u64(line_no, 2, cols[1])?;
        let orig_node = parse_u64(line_no, 3, cols[2])?;
        let dest_node = parse_u64(line_no, 4, cols[3])?;
        let start_time = time_field(line_no, cols[4])?;
        let end_time = time_field(line_no, cols[5])?;
        let duration = time_field(line_no, cols[6])?;
        if end_time < start_time {
            return Err(invalid(
                line_no,
                format!("leg {leg_id}: end time precedes start time (midnight-crossing trips unsupported)"),
            ));
        }
        let gap = (duration - (end_time - start_time)).abs();
        if gap > DURATION_TOLERANCE_S {
            return Err(invalid(
                line_no,
                format!(
                    "leg {leg_id}: duration {duration:.2}s inconsistent with end-start {:.2}s (off by {gap:.2}s)",
                    end_time - start_time
                ),
            ));
        }
        if let Some(prev) = seen.insert(leg_id, line_no) {
            return Err(invalid(
                line_no,
                format!("duplicate leg_id {leg_id} (first at line {prev})"),
            ));
        }
        legs.push(Leg {
            leg_id,
            person_id,
            orig_node,
            dest_node,
            start_time,
            end_time,
            duration,
        });
    }
    Ok(legs)
}

pub fn parse_routes(text: &str) -> Result<HashMap<u64, Vec<u64>>, TableError> {
    let mut routes = HashMap::new();
    for (line_no, line) in data_rows(text)? {
        let (id_field, rest) = line.split_once(',').ok_or(TableError::ColumnCount {
            line: line_no,
            expected: 2,
            found: 1,
        })?;
        let leg_id = parse_u64(line_no, 1, id_field)?;
        let body = rest.trim();
        let inner = body
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| {
                invalid(
                    line_no,
                    format!("leg {leg_id}: route list is not bracketed"),
                )
            })?;
        if inner.contains('[') || inner.contains(']') {
            return Err(invalid(
                line_no,
                format!("leg {leg_id}: nested or unmatched bracket in route list"),
            ));
        }
        if inner.trim().is_empty() {
            return Err(invalid(line_no, format!("leg {leg_id}: empty route")));
        }
        let mut link_ids = Vec::new();
        for (i, field) in inner.split(',').enumerate() {
            link_ids.push(parse_u64(line_no, i + 2, field)?);
        }
        if routes.insert(leg_id, link_ids).is_some() {
            return Err(invalid(
                line_no,
                format!("duplicate leg_id {leg_id} in route table"),
            ));
        }
    }
    Ok(routes)
}

pub fn write_nodes(nodes: &[Node]) -> String {
    let mut out = String::from("node_id,lon,lat,elev\n");
    for n in nodes {
        out.push_str(&format!("{},{},{},{}\n", n.node_id, n.lon, n.lat, n.elev));
    }
    out
}

pub fn write_links(links: &[Link]) -> String {
    let mut out = String::from("link_id,node_id_in,node_id_out,free_speed,length,capacity\n");
    for l in links {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            l.link_id, l.node_id_in, l.node_id_out, l.free_speed, l.length, l.capacity
        ));
    }
    out
}

fn speeds_header() -> String {
    let mut header = String::from("link_id");
    for bin in 0..BINS_PER_DAY {
        header.push_str(&format!(",{:02}:{:02}", bin / 4, bin % 4 * 15));
    }
    header.push('\n');
    header
}

/// Rows sorted by link id for a deterministic byte stream.
pub fn write_speed_profiles(profiles: &HashMap<u64, SpeedProfile>) -> String {
    let mut out = speeds_header();
    let mut ids: Vec<u64> = profiles.keys().copied().collect();
    ids.sort_unstable();
    for id in ids {
        out.push_str(&id.to_string());
        for v in &profiles[&id].speeds {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_legs(legs: &[Leg]) -> String {
    let mut out =
        String::from("leg_id,person_id,orig_node,dest_node,start_time,end_time,duration\n");
    for l in legs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            l.leg_id,
            l.person_id,
            l.orig_node,
            l.dest_node,
            format_time(l.start_time),
            format_time(l.end_time),
            format_time(l.duration)
        ));
    }
    out
}

/// Rows sorted by leg id for a deterministic byte stream.
pub fn write_routes(routes: &HashMap<u64, Vec<u64>>) -> String {
    let mut out = String::from("leg_id,route\n");
    let mut ids: Vec<u64> = routes.keys().copied().collect();
    ids.sort_unstable();
    for id in ids {
        let list = routes[&id]
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        out.push_str(&format!("{id},[{list}]\n"));
    }
    out
}
