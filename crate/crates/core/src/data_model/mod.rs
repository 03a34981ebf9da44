//! In-memory model of the five simulator export tables (links, nodes, speed
//! profiles, legs, routes) with cross-reference validation and indexing.
//!
//! [`NetworkDataset::build`] validates referential integrity and returns an
//! immutable dataset that downstream estimators share freely across threads.
//! Topology defects that regional exports commonly contain (route
//! discontinuities, leg origins that disagree with the first route link) are
//! reported as warnings by default and promoted to errors in strict mode.

mod tables;

pub use tables::{
    format_time, parse_legs, parse_links, parse_nodes, parse_routes, parse_speed_profiles,
    parse_time, write_legs, write_links, write_nodes, write_routes, write_speed_profiles,
    TableError,
};

use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

use crate::units::BINS_PER_DAY;

/// Tolerance on `|duration - (end - start)|`; inputs carry centisecond
/// resolution, so two rounding steps can disagree by up to 0.02 s.
pub const DURATION_TOLERANCE_S: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub node_id: u64,
    pub lon: f64,
    pub lat: f64,
    pub elev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub link_id: u64,
    pub node_id_in: u64,
    pub node_id_out: u64,
    /// Free-flow speed, m/s.
    pub free_speed: f64,
    /// Length, meters.
    pub length: f64,
    /// Capacity, vehicles/hour.
    pub capacity: f64,
}

/// 96 per-link average speeds, one per 15-minute bin covering 00:00–23:45.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    pub link_id: u64,
    pub speeds: [f64; BINS_PER_DAY],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub leg_id: u64,
    pub person_id: u64,
    pub orig_node: u64,
    pub dest_node: u64,
    /// Seconds since midnight, fractional.
    pub start_time: f64,
    pub end_time: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteAssignment {
    pub leg_id: u64,
    pub link_ids: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    /// Topology defects are recorded as warnings.
    #[default]
    Lenient,
    /// Warnings become errors, and leg origin/destination node references
    /// must resolve within the node table.
    Strict,
}

/// Non-fatal findings from dataset assembly.
#[derive(Debug, Clone, PartialEq)]
pub enum BuildWarning {
    /// Consecutive route links are not connected (out-node of one is not the
    /// in-node of the next).
    RouteDiscontinuity {
        leg_id: u64,
        position: usize,
        from_link: u64,
        to_link: u64,
    },
    /// A routed leg's origin node differs from the first link's in-node.
    LegOriginMismatch {
        leg_id: u64,
        orig_node: u64,
        first_link_in: u64,
    },
}

impl fmt::Display for BuildWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildWarning::RouteDiscontinuity { leg_id, position, from_link, to_link } => write!(
                f,
                "route for leg {leg_id} breaks at position {position}: link {from_link} does not connect to link {to_link}"
            ),
            BuildWarning::LegOriginMismatch { leg_id, orig_node, first_link_in } => write!(
                f,
                "leg {leg_id} origin node {orig_node} differs from first route link in-node {first_link_in}"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("duplicate {entity} id {id}")]
    DuplicateId { entity: &'static str, id: u64 },
    #[error("unknown node {node_id} referenced by link {link_id}")]
    UnknownNode { link_id: u64, node_id: u64 },
    #[error("unknown link {link_id} referenced by {referrer}")]
    UnknownLink { link_id: u64, referrer: String },
    #[error("route references unknown leg {0}")]
    UnknownLeg(u64),
    #[error("strict: {0}")]
    StrictWarning(BuildWarning),
    #[error("strict: leg {leg_id} references node {node_id} absent from the node table")]
    StrictUnknownLegNode { leg_id: u64, node_id: u64 },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown leg {0}")]
    UnknownLeg(u64),
    #[error("leg {0} has no route")]
    MissingRoute(u64),
    #[error("unknown person {0}")]
    UnknownPerson(u64),
    #[error("unknown link {0}")]
    UnknownLink(u64),
}

/// Validated, immutable view over the five tables, indexed by identifier.
#[derive(Debug, Clone)]
pub struct NetworkDataset {
    nodes: HashMap<u64, Node>,
    links: HashMap<u64, Link>,
    speed_profiles: HashMap<u64, SpeedProfile>,
    legs: HashMap<u64, Leg>,
    routes: HashMap<u64, Vec<u64>>,
    /// person_id -> leg ids ascending by start_time, ties by leg_id.
    persons: HashMap<u64, Vec<u64>>,
}

impl NetworkDataset {
    /// Assembles and validates a dataset. Referential errors (dangling ids,
    /// duplicates) always fail; topology warnings fail only in strict mode
    /// and are otherwise returned alongside the dataset.
    pub fn build(
        nodes: Vec<Node>,
        links: Vec<Link>,
        speed_profiles: HashMap<u64, SpeedProfile>,
        legs: Vec<Leg>,
        routes: HashMap<u64, Vec<u64>>,
        mode: ValidationMode,
    ) -> Result<(Self, Vec<BuildWarning>), BuildError> {
        let mut node_map = HashMap::with_capacity(nodes.len());
        for node in nodes {
            if node_map.insert(node.node_id, node.clone()).is_some() {
                return Err(BuildError::DuplicateId {
                    entity: "node",
                    id: node.node_id,
                });
            }
        }
        let mut link_map = HashMap::with_capacity(links.len());
        for link in links {
            for node_id in [link.node_id_in, link.node_id_out] {
                if !node_map.contains_key(&node_id) {
                    return Err(BuildError::UnknownNode {
                        link_id: link.link_id,
                        node_id,
                    });
                }
            }
            if link_map.insert(link.link_id, link.clone()).is_some() {
                return Err(BuildError::DuplicateId {
                    entity: "link",
                    id: link.link_id,
                });
            }
        }
        for link_id in speed_profiles.keys() {
            if !link_map.contains_key(link_id) {
                return Err(BuildError::UnknownLink {
                    link_id: *link_id,
                    referrer: "speed profile".to_string(),
                });
            }
        }
        let mut leg_map = HashMap::with_capacity(legs.len());
        let mut persons: HashMap<u64, Vec<u64>> = HashMap::new();
        for leg in legs {
            if mode == ValidationMode::Strict {
                for node_id in [leg.orig_node, leg.dest_node] {
                    if !node_map.contains_key(&node_id) {
                        return Err(BuildError::StrictUnknownLegNode {
                            leg_id: leg.leg_id,
                            node_id,
                        });
                    }
                }
            }
            persons.entry(leg.person_id).or_default().push(leg.leg_id);
            if leg_map.insert(leg.leg_id, leg.clone()).is_some() {
                return Err(BuildError::DuplicateId {
                    entity: "leg",
                    id: leg.leg_id,
                });
            }
        }

        let mut warnings = Vec::new();
        for (leg_id, link_ids) in &routes {
            let leg = leg_map.get(leg_id).ok_or(BuildError::UnknownLeg(*leg_id))?;
            for link_id in link_ids {
                if !link_map.contains_key(link_id) {
                    return Err(BuildError::UnknownLink {
                        link_id: *link_id,
                        referrer: format!("route for leg {leg_id}"),
                    });
                }
            }
            for (pos, window) in link_ids.windows(2).enumerate() {
                let from = &link_map[&window[0]];
                let to = &link_map[&window[1]];
                if from.node_id_out != to.node_id_in {
                    warnings.push(BuildWarning::RouteDiscontinuity {
                        leg_id: *leg_id,
                        position: pos,
                        from_link: window[0],
                        to_link: window[1],
                    });
                }
            }
            let first = &link_map[&link_ids[0]];
            if leg.orig_node != first.node_id_in {
                warnings.push(BuildWarning::LegOriginMismatch {
                    leg_id: *leg_id,
                    orig_node: leg.orig_node,
                    first_link_in: first.node_id_in,
                });
            }
        }

        if mode == ValidationMode::Strict {
            if let Some(w) = warnings.into_iter().next() {
                return Err(BuildError::StrictWarning(w));
            }
            warnings = Vec::new();
        }

        for leg_ids in persons.values_mut() {
            leg_ids.sort_by(|a, b| {
                let la = &leg_map[a];
                let lb = &leg_map[b];
                la.start_time
                    .partial_cmp(&lb.start_time)
                    .unwrap()
                    .then(a.cmp(b))
            });
        }

        Ok((
            Self {
                nodes: node_map,
                links: link_map,
                speed_profiles,
                legs: leg_map,
                routes,
                persons,
            },
            warnings,
        ))
    }

    pub fn node(&self, id: u64) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn link(&self, id: u64) -> Option<&Link> {
        self.links.get(&id)
    }

    pub fn speed_profile(&self, link_id: u64) -> Option<&SpeedProfile> {
        self.speed_profiles.get(&link_id)
    }

    pub fn leg(&self, id: u64) -> Option<&Leg> {
        self.legs.get(&id)
    }

    pub fn route(&self, leg_id: u64) -> Option<&[u64]> {
        self.routes.get(&leg_id).map(Vec::as_slice)
    }

    /// Leg ids for a person, ascending by start time.
    pub fn person_legs(&self, person_id: u64) -> Option<&[u64]> {
        self.persons.get(&person_id).map(Vec::as_slice)
    }

    pub fn person_ids_sorted(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.persons.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn leg_ids_sorted(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.legs.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn profile_count(&self) -> usize {
        self.speed_profiles.len()
    }

    pub fn leg_count(&self) -> usize {
        self.legs.len()
    }

    pub fn route_count(&self) -> usize {
        self.routes.len()
    }

    pub fn person_count(&self) -> usize {
        self.persons.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }

    pub fn legs(&self) -> impl Iterator<Item = &Leg> {
        self.legs.values()
    }

    pub fn speed_profiles(&self) -> &HashMap<u64, SpeedProfile> {
        &self.speed_profiles
    }

    pub fn routes(&self) -> &HashMap<u64, Vec<u64>> {
        &self.routes
    }

    /// Total route length of a leg in meters.
    pub fn leg_route_length(&self, leg_id: u64) -> Result<f64, DatasetError> {
        if !self.legs.contains_key(&leg_id) {
            return Err(DatasetError::UnknownLeg(leg_id));
        }
        let route = self
            .routes
            .get(&leg_id)
            .ok_or(DatasetError::MissingRoute(leg_id))?;
        Ok(route.iter().map(|id| self.links[id].length).sum())
    }

    /// Unweighted centroid of all node coordinates; the default projection
    /// origin for the demand-density grid.
    pub fn node_centroid(&self) -> Option<(f64, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let n = self.nodes.len() as f64;
        let (mut lon, mut lat) = (0.0, 0.0);
        for node in self.nodes.values() {
            lon += node.lon;
            lat += node.lat;
        }
        Some((lon / n, lat / n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: u64) -> Node {
        Node {
            node_id: id,
            lon: -122.0,
            lat: 37.5,
            elev: 0.0,
        }
    }

    fn link(id: u64, from: u64, to: u64, length: f64) -> Link {
        Link {
            link_id: id,
            node_id_in: from,
            node_id_out: to,
            free_speed: 10.0,
            length,
            capacity: 1000.0,
        }
    }

    fn leg(id: u64, person: u64, start: f64, dur: f64) -> Leg {
        Leg {
            leg_id: id,
            person_id: person,
            orig_node: 1,
            dest_node: 2,
            start_time: start,
            end_time: start + dur,
            duration: dur,
        }
    }

    fn two_node_fixture() -> (Vec<Node>, Vec<Link>, Vec<Leg>, HashMap<u64, Vec<u64>>) {
        let nodes = vec![node(1), node(2)];
        let links = vec![link(10, 1, 2, 200.579)];
        let legs = vec![leg(100, 7, 3600.0, 60.0)];
        let mut routes = HashMap::new();
        routes.insert(100u64, vec![10u64]);
        (nodes, links, legs, routes)
    }

    #[test]
    fn consistent_fixture_builds_one_person() {
        let (nodes, links, legs, routes) = two_node_fixture();
        let (ds, warnings) = NetworkDataset::build(
            nodes,
            links,
            HashMap::new(),
            legs,
            routes,
            ValidationMode::Lenient,
        )
        .unwrap();
        assert_eq!(ds.person_count(), 1);
        assert_eq!(ds.person_legs(7).unwrap(), &[100]);
        assert!(warnings.is_empty());
    }

    #[test]
    fn unknown_route_link_is_an_error() {
        let (nodes, links, legs, mut routes) = two_node_fixture();
        routes.insert(100, vec![999]);
        let err = NetworkDataset::build(
            nodes,
            links,
            HashMap::new(),
            legs,
            routes,
            ValidationMode::Lenient,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown link 999"), "{err}");
    }

    #[test]
    fn persons_sorted_by_start_time_with_leg_id_tiebreak() {
        // Legs inserted out of order; the sort oracle is the explicit
        // expected ordering by (start_time, leg_id).
        let nodes = vec![node(1), node(2)];
        let links = vec![link(10, 1, 2, 100.0)];
        let legs = vec![
            leg(103, 7, 9000.0, 60.0),
            leg(101, 7, 3600.0, 60.0),
            leg(102, 7, 9000.0, 60.0),
        ];
        let (ds, _) = NetworkDataset::build(
            nodes,
            links,
            HashMap::new(),
            legs,
            HashMap::new(),
            ValidationMode::Lenient,
        )
        .unwrap();
        assert_eq!(ds.person_legs(7).unwrap(), &[101, 102, 103]);
    }

    #[test]
    fn persons_partition_legs() {
        let nodes = vec![node(1), node(2)];
        let links = vec![link(10, 1, 2, 100.0)];
        let legs: Vec<Leg> = (0..20)
            .map(|i| leg(i, i % 3, 100.0 * i as f64, 10.0))
            .collect();
        let total = legs.len();
        let (ds, _) = NetworkDataset::build(
            nodes,
            links,
            HashMap::new(),
            legs,
            HashMap::new(),
            ValidationMode::Lenient,
        )
        .unwrap();
        let sum: usize = ds
            .person_ids_sorted()
            .iter()
            .map(|p| ds.person_legs(*p).unwrap().len())
            .sum();
        assert_eq!(sum, total);
    }

    #[test]
    fn route_discontinuity_warns_lenient_errors_strict() {
        let nodes = vec![node(1), node(2), node(3), node(4)];
        let links = vec![link(10, 1, 2, 100.0), link(11, 3, 4, 100.0)];
        let legs = vec![leg(100, 7, 3600.0, 60.0)];
        let mut routes = HashMap::new();
        routes.insert(100u64, vec![10u64, 11u64]);

        let (_, warnings) = NetworkDataset::build(
            nodes.clone(),
            links.clone(),
            HashMap::new(),
            legs.clone(),
            routes.clone(),
            ValidationMode::Lenient,
        )
        .unwrap();
        assert!(warnings
            .iter()
            .any(|w| matches!(w, BuildWarning::RouteDiscontinuity { leg_id: 100, .. })));

        let err = NetworkDataset::build(
            nodes,
            links,
            HashMap::new(),
            legs,
            routes,
            ValidationMode::Strict,
        )
        .unwrap_err();
        assert!(matches!(err, BuildError::StrictWarning(_)));
    }

    #[test]
    fn duplicate_ids_are_hard_errors() {
        let nodes = vec![node(1), node(1)];
        let err = NetworkDataset::build(
            nodes,
            Vec::new(),
            HashMap::new(),
            Vec::new(),
            HashMap::new(),
            ValidationMode::Lenient,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            BuildError::DuplicateId {
                entity: "node",
                id: 1
            }
        ));
    }

    #[test]
    fn link_with_unknown_node_rejected() {
        let nodes = vec![node(1)];
        let links = vec![link(10, 1, 99, 100.0)];
        let err = NetworkDataset::build(
            nodes,
            links,
            HashMap::new(),
            Vec::new(),
            HashMap::new(),
            ValidationMode::Lenient,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            BuildError::UnknownNode {
                link_id: 10,
                node_id: 99
            }
        ));
    }

    #[test]
    fn leg_route_length_sums_links() {
        let nodes = vec![node(1), node(2), node(3)];
        let links = vec![link(10, 1, 2, 200.579), link(11, 2, 3, 100.0)];
        let legs = vec![leg(100, 7, 3600.0, 60.0), leg(101, 7, 7200.0, 60.0)];
        let mut routes = HashMap::new();
        routes.insert(100u64, vec![10u64, 11u64]);
        routes.insert(101u64, vec![10u64]);
        let (ds, _) = NetworkDataset::build(
            nodes,
            links,
            HashMap::new(),
            legs,
            routes,
            ValidationMode::Lenient,
        )
        .unwrap();
        // hand sum: 200.579 + 100.0
        assert!((ds.leg_route_length(100).unwrap() - 300.579).abs() < 1e-12);
        assert_eq!(ds.leg_route_length(101).unwrap(), 200.579);
    }

    #[test]
    fn missing_route_errors() {
        let (nodes, links, legs, _) = two_node_fixture();
        let (ds, _) = NetworkDataset::build(
            nodes,
            links,
            HashMap::new(),
            legs,
            HashMap::new(),
            ValidationMode::Lenient,
        )
        .unwrap();
        assert!(matches!(
            ds.leg_route_length(100),
            Err(DatasetError::MissingRoute(100))
        ));
        assert!(matches!(
            ds.leg_route_length(999),
            Err(DatasetError::UnknownLeg(999))
        ));
    }

    #[test]
    fn strict_mode_checks_leg_node_references() {
        let (nodes, links, mut legs, routes) = two_node_fixture();
        legs[0].orig_node = 12345; // id space mismatch
        let err = NetworkDataset::build(
            nodes.clone(),
            links.clone(),
            HashMap::new(),
            legs.clone(),
            routes.clone(),
            ValidationMode::Strict,
        )
        .unwrap_err();
        assert!(matches!(err, BuildError::StrictUnknownLegNode { .. }));

        // Lenient mode tolerates a foreign id space but still flags the
        // origin/first-link mismatch.
        let (_, warnings) = NetworkDataset::build(
            nodes,
            links,
            HashMap::new(),
            legs,
            routes,
            ValidationMode::Lenient,
        )
        .unwrap();
        assert!(warnings
            .iter()
            .any(|w| matches!(w, BuildWarning::LegOriginMismatch { leg_id: 100, .. })));
    }
}
