//! Geometry, waypoint mobility, log-distance propagation and the
//! connectivity graph derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::engine::SimTime;
use crate::node::{NodeId, NodeKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("distance must be positive")]
    ZeroDistance,
    #[error("nodes {0} and {1} share a position")]
    CoLocated(NodeId, NodeId),
    #[error("invalid radio profile: {0}")]
    InvalidProfile(&'static str),
    #[error("invalid mobility path: {0}")]
    InvalidPath(&'static str),
    #[error("adjacency must be symmetric and loop-free (edge {0}-{1})")]
    BadEdge(NodeId, NodeId),
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(self, other: Point, frac: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * frac,
            self.y + (other.y - self.y) * frac,
        )
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Log-distance radio parameters. Powers in dBm, losses in dB, reference
/// distance 1 m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioProfile {
    pub tx_power: f64,
    pub sensitivity: f64,
    pub error_margin: f64,
    pub path_loss_exponent: f64,
    pub reference_loss: f64,
}

impl RadioProfile {
    /// Mote (and mobile station) radio: about 73.6 m reach, clean reception
    /// out to about 68.1 m.
    pub const MOTE: RadioProfile = RadioProfile {
        tx_power: 0.0,
        sensitivity: -96.0,
        error_margin: 1.0,
        path_loss_exponent: 3.0,
        reference_loss: 40.0,
    };

    /// Base station: 100 m nominal reach.
    pub const BASE_STATION: RadioProfile = RadioProfile {
        tx_power: 5.0,
        sensitivity: -95.0,
        error_margin: 1.0,
        path_loss_exponent: 3.0,
        reference_loss: 40.0,
    };

    pub fn default_for(kind: NodeKind) -> RadioProfile {
        match kind {
            NodeKind::Mote | NodeKind::MobileStation => Self::MOTE,
            NodeKind::BaseStation | NodeKind::Satellite | NodeKind::Msc => Self::BASE_STATION,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let fields = [
            self.tx_power,
            self.sensitivity,
            self.error_margin,
            self.path_loss_exponent,
            self.reference_loss,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(WorldError::InvalidProfile("non-finite field"));
        }
        if self.sensitivity >= self.tx_power - self.reference_loss {
            return Err(WorldError::InvalidProfile(
                "sensitivity must be below tx_power - reference_loss",
            ));
        }
        if self.error_margin < 0.0 {
            return Err(WorldError::InvalidProfile("error_margin must be >= 0"));
        }
        if !(1.6..=6.0).contains(&self.path_loss_exponent) {
            return Err(WorldError::InvalidProfile(
                "path_loss_exponent must lie in [1.6, 6]",
            ));
        }
        Ok(())
    }

    /// Distance at which received power falls to `threshold` dBm.
    fn radius_for(&self, threshold: f64) -> f64 {
        10f64.powf((self.tx_power - self.reference_loss - threshold) / (10.0 * self.path_loss_exponent))
    }

    /// Largest distance that is still in range.
    pub fn range(&self) -> f64 {
        self.radius_for(self.sensitivity)
    }

    /// Largest distance at which reception is error-free.
    pub fn clean_range(&self) -> f64 {
        self.radius_for(self.sensitivity + self.error_margin)
    }
}

/// Received power in dBm at `distance` meters.
pub fn received_power(profile: &RadioProfile, distance: f64) -> Result<f64, WorldError> {
    if distance <= 0.0 {
        return Err(WorldError::ZeroDistance);
    }
    Ok(profile.tx_power - profile.reference_loss - 10.0 * profile.path_loss_exponent * distance.log10())
}

/// Inclusive: received power equal to the sensitivity counts as in range.
pub fn in_range(a: Point, b: Point, profile: &RadioProfile) -> Result<bool, WorldError> {
    Ok(received_power(profile, a.distance(b))? >= profile.sensitivity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketOutcome {
    Delivered,
    Errored,
    Lost,
}

pub fn packet_outcome(profile: &RadioProfile, rx_power: f64) -> PacketOutcome {
    if rx_power < profile.sensitivity {
        PacketOutcome::Lost
    } else if rx_power < profile.sensitivity + profile.error_margin {
        PacketOutcome::Errored
    } else {
        PacketOutcome::Delivered
    }
}

/// The more restrictive of two profiles: the one with the shorter range,
/// then the shorter clean range. Symmetric in its arguments up to profiles
/// that yield identical outcomes at every distance.
pub fn link_profile<'a>(a: &'a RadioProfile, b: &'a RadioProfile) -> &'a RadioProfile {
    let key = |p: &RadioProfile| (p.range(), p.clean_range());
    let (ka, kb) = (key(a), key(b));
    match ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)) {
        std::cmp::Ordering::Greater => b,
        _ => a,
    }
}

/// Piecewise-linear route walked at constant speed, stopping for good once
/// `halt_fraction` of the route length has been covered.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityPath {
    pub waypoints: Vec<Point>,
    pub speed: f64,
    pub halt_fraction: f64,
}

impl MobilityPath {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.waypoints.is_empty() {
            return Err(WorldError::InvalidPath("at least one waypoint required"));
        }
        if self.waypoints.windows(2).any(|w| w[0] == w[1]) {
            return Err(WorldError::InvalidPath("consecutive waypoints must differ"));
        }
        if self.waypoints.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(WorldError::InvalidPath("non-finite waypoint"));
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(WorldError::InvalidPath("speed must be positive"));
        }
        if !(self.halt_fraction > 0.0 && self.halt_fraction <= 1.0) {
            return Err(WorldError::InvalidPath("halt_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    /// The full route: `start` followed by the waypoints, with a leading
    /// waypoint equal to `start` folded into it.
    pub fn route(&self, start: Point) -> Vec<Point> {
        let mut route = vec![start];
        for &p in &self.waypoints {
            if *route.last().unwrap() != p {
                route.push(p);
            }
        }
        route
    }

    pub fn route_length(&self, start: Point) -> f64 {
        self.route(start).windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Time at which the node stops moving.
    pub fn halt_time(&self, start: Point) -> SimTime {
        SimTime::from_secs(self.halt_fraction * self.route_length(start) / self.speed)
    }

    pub fn halt_point(&self, start: Point) -> Point {
        self.point_at_arc(start, self.halt_fraction * self.route_length(start))
    }

    pub fn position_at(&self, start: Point, t: SimTime) -> Point {
        let halt_arc = self.halt_fraction * self.route_length(start);
        let travelled = (self.speed * t.as_secs()).min(halt_arc);
        self.point_at_arc(start, travelled)
    }

    fn point_at_arc(&self, start: Point, arc: f64) -> Point {
        let route = self.route(start);
        let mut remaining = arc;
        for w in route.windows(2) {
            let len = w[0].distance(w[1]);
            if remaining <= len {
                return w[0].lerp(w[1], remaining / len);
            }
            remaining -= len;
        }
        *route.last().unwrap()
    }
}

/// A node as seen by the propagation model at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub position: Point,
    pub profile: RadioProfile,
}

/// Undirected connectivity at one instant.
///
/// Terrestrial nodes are adjacent when both ends reach each other under the
/// more restrictive profile. Satellites are adjacent to every terrestrial
/// node. The MSC has no radio and is always isolated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommGraph {
    kinds: BTreeMap<NodeId, NodeKind>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl CommGraph {
    pub fn build(nodes: &[RadioNode]) -> Result<CommGraph, WorldError> {
        let mut graph = CommGraph::default();
        for n in nodes {
            graph.kinds.insert(n.id, n.kind);
            graph.adjacency.entry(n.id).or_default();
        }
        for (i, a) in nodes.iter().enumerate() {
            for b in &nodes[i + 1..] {
                if graph.linked(a, b)? {
                    graph.add_edge(a.id, b.id);
                }
            }
        }
        Ok(graph)
    }

    fn linked(&self, a: &RadioNode, b: &RadioNode) -> Result<bool, WorldError> {
        use NodeKind::*;
        Ok(match (a.kind, b.kind) {
            (Msc, _) | (_, Msc) => false,
            (Satellite, Satellite) => false,
            (Satellite, _) | (_, Satellite) => true,
            _ => {
                if a.position == b.position {
                    return Err(WorldError::CoLocated(a.id.min(b.id), a.id.max(b.id)));
                }
                in_range(a.position, b.position, link_profile(&a.profile, &b.profile))?
            }
        })
    }

    /// Builds a graph from explicit edges; used for protocol-level work where
    /// geometry is irrelevant.
    pub fn from_edges(
        kinds: impl IntoIterator<Item = (NodeId, NodeKind)>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<CommGraph, WorldError> {
        let mut graph = CommGraph::default();
        for (id, kind) in kinds {
            graph.kinds.insert(id, kind);
            graph.adjacency.entry(id).or_default();
        }
        for (a, b) in edges {
            if a == b || !graph.kinds.contains_key(&a) || !graph.kinds.contains_key(&b) {
                return Err(WorldError::BadEdge(a, b));
            }
            graph.add_edge(a, b);
        }
        Ok(graph)
    }

    fn add_edge(&mut self, a: NodeId, b: NodeId) {
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, NodeKind)> + '_ {
        self.kinds.iter().map(|(&id, &k)| (id, k))
    }

    pub fn kind(&self, id: NodeId) -> Option<NodeKind> {
        self.kinds.get(&id).copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.kinds.contains_key(&id)
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&id).into_iter().flatten().copied()
    }

    /// Neighbors of `id` that have the given kind, in id order.
    pub fn neighbors_of_kind(&self, id: NodeId, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.neighbors(id).filter(move |n| self.kind(*n) == Some(kind))
    }

    pub fn is_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|s| s.contains(&b))
    }

    /// Each undirected edge once, as `(smaller, larger)`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(&a, set)| set.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }
}
