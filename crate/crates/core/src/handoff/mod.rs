//! Mote-assisted handoff.
//!
//! A mobile station that can no longer hear any base station asks the
//! motes around it for help. The request carries the station's exact
//! position and is flooded mote to mote (duplicate suppression plus a hop
//! budget) until a mote next to a base station hands it over. The base
//! station escalates to the MSC, which either tells the nearest base station
//! able to steer its antenna array at that position to do so, or falls back
//! to the satellite. Once the link is up, every mote on the relay path goes
//! to sleep for the rest of the run.

mod flood;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::engine::SimTime;
use crate::node::{NodeId, NodeKind};
use crate::world::{CommGraph, Point};

pub use flood::{flood_on_graph, FloodOutcome, FLOOD_HOP_DELAY};

/// Hop budget for a fresh discovery; equal to the routing metric ceiling.
pub const DEFAULT_TTL: u32 = 16;
/// Energy charged to a mote per transmission, in abstract units.
pub const TX_ENERGY_UNITS: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HandoffError {
    #[error("mobile station {0} has no active mote in range")]
    NoMotesInRange(NodeId),
    #[error("satellite fallback needed but the scenario has no satellite")]
    NoSatellite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryRequest {
    pub request_id: u64,
    pub ms_id: NodeId,
    pub ms_location: Point,
    pub emitted_at: SimTime,
    pub ttl: u32,
    /// Motes traversed so far, in order.
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MoteMode {
    #[default]
    Active,
    Sleeping,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MoteState {
    pub mode: MoteMode,
    pub seen: BTreeSet<u64>,
    pub energy_consumed: u64,
}

impl MoteState {
    pub fn is_active(&self) -> bool {
        self.mode == MoteMode::Active
    }

    /// Charges one transmission unless the mote is asleep. Returns whether it
    /// may transmit.
    pub fn charge_transmission(&mut self) -> bool {
        if self.is_active() {
            self.energy_consumed += TX_ENERGY_UNITS;
            true
        } else {
            false
        }
    }
}

/// Hands out request ids, starting at 1.
#[derive(Debug, Clone, Default)]
pub struct RequestIds {
    last: u64,
}

impl RequestIds {
    pub fn next_id(&mut self) -> u64 {
        self.last += 1;
        self.last
    }
}

/// True when `ms` is not adjacent to any base station.
pub fn detect_loss(ms: NodeId, graph: &CommGraph) -> bool {
    graph.neighbors_of_kind(ms, NodeKind::BaseStation).next().is_none()
}

/// Active motes adjacent to `node`. Sleeping motes are expected to be absent
/// from `graph`; `states` filters any that are not.
fn active_mote_neighbors<'a>(
    node: NodeId,
    graph: &'a CommGraph,
    states: &'a BTreeMap<NodeId, MoteState>,
) -> impl Iterator<Item = NodeId> + 'a {
    graph
        .neighbors_of_kind(node, NodeKind::Mote)
        .filter(move |m| states.get(m).is_none_or(MoteState::is_active))
}

/// Builds the request a stranded mobile station broadcasts to its motes.
pub fn make_discovery(
    ids: &mut RequestIds,
    ms: NodeId,
    location: Point,
    emitted_at: SimTime,
    ttl: u32,
    graph: &CommGraph,
    motes: &BTreeMap<NodeId, MoteState>,
) -> Result<DiscoveryRequest, HandoffError> {
    if active_mote_neighbors(ms, graph, motes).next().is_none() {
        return Err(HandoffError::NoMotesInRange(ms));
    }
    Ok(DiscoveryRequest {
        request_id: ids.next_id(),
        ms_id: ms,
        ms_location: location,
        emitted_at,
        ttl,
        path: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForwardAction {
    Unicast { to: NodeId, request: DiscoveryRequest },
    Broadcast { targets: Vec<NodeId>, request: DiscoveryRequest },
}

impl ForwardAction {
    pub fn request(&self) -> &DiscoveryRequest {
        match self {
            ForwardAction::Unicast { request, .. } | ForwardAction::Broadcast { request, .. } => request,
        }
    }
}

/// One mote's reaction to a discovery request.
///
/// Sleeping motes, repeats, exhausted hop budgets and requests that already
/// passed through this mote produce no action. Otherwise the mote appends
/// itself to the path, spends one hop and one transmission, and either hands
/// the request to an adjacent base station (lowest id) or rebroadcasts it to
/// the active motes around it that the request has not visited.
pub fn mote_forward(
    mote: NodeId,
    state: &mut MoteState,
    req: &DiscoveryRequest,
    graph: &CommGraph,
    motes: &BTreeMap<NodeId, MoteState>,
) -> Vec<ForwardAction> {
    if !state.is_active() {
        return Vec::new();
    }
    let newly_seen = state.seen.insert(req.request_id);
    if !newly_seen || req.ttl == 0 || req.path.contains(&mote) {
        return Vec::new();
    }
    let mut forwarded = req.clone();
    forwarded.path.push(mote);
    forwarded.ttl -= 1;

    if let Some(bs) = graph.neighbors_of_kind(mote, NodeKind::BaseStation).next() {
        state.charge_transmission();
        return vec![ForwardAction::Unicast {
            to: bs,
            request: forwarded,
        }];
    }
    let targets: Vec<NodeId> = active_mote_neighbors(mote, graph, motes)
        .filter(|m| !forwarded.path.contains(m))
        .collect();
    if targets.is_empty() {
        return Vec::new();
    }
    state.charge_transmission();
    vec![ForwardAction::Broadcast {
        targets,
        request: forwarded,
    }]
}

/// What a base station passes to the MSC.
#[derive(Debug, Clone, PartialEq)]
pub struct Escalation {
    pub bs: NodeId,
    pub request: DiscoveryRequest,
}

/// Per-base-station duplicate filter.
#[derive(Debug, Clone, Default)]
pub struct BaseStationState {
    escalated: BTreeSet<u64>,
}

impl BaseStationState {
    /// Escalates the first copy of each request; later copies yield `None`.
    pub fn notify_msc(&mut self, bs: NodeId, req: &DiscoveryRequest) -> Option<Escalation> {
        self.escalated.insert(req.request_id).then(|| Escalation {
            bs,
            request: req.clone(),
        })
    }
}

/// Inclusive range test for antenna-array steering.
pub fn steer_feasible(bs_pos: Point, ms_loc: Point, max_steer_range: f64) -> bool {
    bs_pos.distance(ms_loc) <= max_steer_range
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionOutcome {
    SteerTo(NodeId),
    /// `located` is false when the MSC had no position for the station and
    /// the satellite has to search for it.
    SatelliteFallback { satellite: NodeId, located: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MscDecision {
    pub request_id: u64,
    pub ms_id: NodeId,
    pub outcome: DecisionOutcome,
}

/// Picks the nearest base station that can steer to `ms_loc` (ties to the
/// lower id), else the lowest-id satellite.
pub fn msc_decide(
    request_id: u64,
    ms_id: NodeId,
    ms_loc: Point,
    base_stations: &BTreeMap<NodeId, Point>,
    max_steer_range: f64,
    satellites: &[NodeId],
) -> Result<MscDecision, HandoffError> {
    let best = base_stations
        .iter()
        .filter(|(_, &pos)| steer_feasible(pos, ms_loc, max_steer_range))
        .min_by(|(ia, pa), (ib, pb)| {
            pa.distance(ms_loc)
                .total_cmp(&pb.distance(ms_loc))
                .then(ia.cmp(ib))
        });
    let outcome = match best {
        Some((&bs, _)) => DecisionOutcome::SteerTo(bs),
        None => DecisionOutcome::SatelliteFallback {
            satellite: lowest_satellite(satellites)?,
            located: true,
        },
    };
    Ok(MscDecision {
        request_id,
        ms_id,
        outcome,
    })
}

/// Decision for a station that reached the MSC over the satellite without a
/// position fix.
pub fn msc_decide_unlocated(
    request_id: u64,
    ms_id: NodeId,
    satellites: &[NodeId],
) -> Result<MscDecision, HandoffError> {
    Ok(MscDecision {
        request_id,
        ms_id,
        outcome: DecisionOutcome::SatelliteFallback {
            satellite: lowest_satellite(satellites)?,
            located: false,
        },
    })
}

fn lowest_satellite(satellites: &[NodeId]) -> Result<NodeId, HandoffError> {
    satellites.iter().min().copied().ok_or(HandoffError::NoSatellite)
}

/// MSC-side duplicate filter: one decision per request id.
#[derive(Debug, Clone, Default)]
pub struct MscState {
    decided: BTreeSet<u64>,
}

impl MscState {
    /// Returns true the first time a request id is offered.
    pub fn accept(&mut self, request_id: u64) -> bool {
        self.decided.insert(request_id)
    }

    pub fn has_decided(&self, request_id: u64) -> bool {
        self.decided.contains(&request_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LinkEndpoint {
    Bs(NodeId),
    Satellite(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDelays {
    pub steering: f64,
    pub satellite_acquisition: f64,
    pub satellite_search: f64,
}

impl Default for LinkDelays {
    fn default() -> Self {
        LinkDelays {
            steering: 0.5,
            satellite_acquisition: 2.0,
            satellite_search: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub ms_id: NodeId,
    pub endpoint: LinkEndpoint,
    pub established_at: SimTime,
    pub relay_path: Vec<NodeId>,
}

fn link_delay(outcome: DecisionOutcome, delays: &LinkDelays) -> (LinkEndpoint, f64) {
    match outcome {
        DecisionOutcome::SteerTo(bs) => (LinkEndpoint::Bs(bs), delays.steering),
        DecisionOutcome::SatelliteFallback { satellite, located: true } => {
            (LinkEndpoint::Satellite(satellite), delays.satellite_acquisition)
        }
        DecisionOutcome::SatelliteFallback { satellite, located: false } => {
            (LinkEndpoint::Satellite(satellite), delays.satellite_search)
        }
    }
}

/// The link that results from `decision`, taken at `decided_at`.
pub fn establish_link(
    decision: &MscDecision,
    req: &DiscoveryRequest,
    decided_at: SimTime,
    delays: &LinkDelays,
) -> LinkRecord {
    debug_assert_eq!(decision.request_id, req.request_id);
    let (endpoint, delay) = link_delay(decision.outcome, delays);
    LinkRecord {
        ms_id: req.ms_id,
        endpoint,
        established_at: decided_at + delay,
        relay_path: req.path.clone(),
    }
}

/// Link for a station that bypassed the motes entirely.
pub fn establish_direct_link(decision: &MscDecision, decided_at: SimTime, delays: &LinkDelays) -> LinkRecord {
    let (endpoint, delay) = link_delay(decision.outcome, delays);
    LinkRecord {
        ms_id: decision.ms_id,
        endpoint,
        established_at: decided_at + delay,
        relay_path: Vec::new(),
    }
}

/// Puts every mote on `path` to sleep. Motes not on the path are untouched.
pub fn release_motes(path: &[NodeId], states: &mut BTreeMap<NodeId, MoteState>) {
    for mote in path {
        if let Some(state) = states.get_mut(mote) {
            state.mode = MoteMode::Sleeping;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: NodeId = NodeId(100);
    const BS: NodeId = NodeId(200);

    fn m(i: u32) -> NodeId {
        NodeId(i)
    }

    /// MS - m1 - m2 - BS, plus an isolated m3.
    fn line() -> (CommGraph, BTreeMap<NodeId, MoteState>) {
        let kinds = [
            (MS, NodeKind::MobileStation),
            (BS, NodeKind::BaseStation),
            (m(1), NodeKind::Mote),
            (m(2), NodeKind::Mote),
            (m(3), NodeKind::Mote),
        ];
        let g = CommGraph::from_edges(kinds, [(MS, m(1)), (m(1), m(2)), (m(2), BS)]).unwrap();
        let states = [1, 2, 3].map(|i| (m(i), MoteState::default())).into_iter().collect();
        (g, states)
    }

    fn request(graph: &CommGraph, states: &BTreeMap<NodeId, MoteState>) -> DiscoveryRequest {
        let mut ids = RequestIds::default();
        make_discovery(&mut ids, MS, Point::new(1.0, 2.0), SimTime::ZERO, DEFAULT_TTL, graph, states).unwrap()
    }

    #[test]
    fn loss_detection() {
        let kinds = [(MS, NodeKind::MobileStation), (BS, NodeKind::BaseStation)];
        let covered = CommGraph::from_edges(kinds, [(MS, BS)]).unwrap();
        assert!(!detect_loss(MS, &covered));
        let alone = CommGraph::from_edges([(MS, NodeKind::MobileStation)], []).unwrap();
        assert!(detect_loss(MS, &alone));
    }

    #[test]
    fn discovery_fields() {
        let (g, states) = line();
        let mut ids = RequestIds::default();
        let loc = Point::new(3.0, 4.0);
        let a = make_discovery(&mut ids, MS, loc, SimTime::from_secs(2.0), DEFAULT_TTL, &g, &states).unwrap();
        let b = make_discovery(&mut ids, MS, loc, SimTime::from_secs(2.0), DEFAULT_TTL, &g, &states).unwrap();
        assert_eq!(a.ttl, 16);
        assert_eq!(a.ms_location, loc);
        assert!(a.path.is_empty());
        assert_ne!(a.request_id, b.request_id);
    }

    #[test]
    fn discovery_without_motes_fails() {
        let (g, mut states) = line();
        states.get_mut(&m(1)).unwrap().mode = MoteMode::Sleeping;
        let mut ids = RequestIds::default();
        let err = make_discovery(&mut ids, MS, Point::default(), SimTime::ZERO, 16, &g, &states).unwrap_err();
        assert_eq!(err, HandoffError::NoMotesInRange(MS));
    }

    #[test]
    fn mote_next_to_bs_unicasts() {
        let (g, states) = line();
        let mut req = request(&g, &states);
        req.path = vec![m(1)];
        let mut st = MoteState::default();
        let actions = mote_forward(m(2), &mut st, &req, &g, &states);
        assert_eq!(actions.len(), 1);
        match &actions[0] {
            ForwardAction::Unicast { to, request } => {
                assert_eq!(*to, BS);
                assert_eq!(request.path, vec![m(1), m(2)]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.energy_consumed, 1);
    }

    #[test]
    fn repeated_request_is_suppressed() {
        let (g, states) = line();
        let req = request(&g, &states);
        let mut st = MoteState::default();
        assert_eq!(mote_forward(m(1), &mut st, &req, &g, &states).len(), 1);
        assert!(mote_forward(m(1), &mut st, &req, &g, &states).is_empty());
        assert_eq!(st.energy_consumed, 1);
    }

    #[test]
    fn line_topology_trace() {
        let (g, mut states) = line();
        let req = request(&g, &states);
        let a1 = mote_forward(m(1), states.get_mut(&m(1)).unwrap(), &req, &g, &line().1);
        let ForwardAction::Broadcast { targets, request } = &a1[0] else {
            panic!("m1 should broadcast");
        };
        assert_eq!(targets, &vec![m(2)]);
        let a2 = mote_forward(m(2), states.get_mut(&m(2)).unwrap(), request, &g, &line().1);
        let ForwardAction::Unicast { to, request } = &a2[0] else {
            panic!("m2 should unicast");
        };
        assert_eq!(*to, BS);
        assert_eq!(request.path, vec![m(1), m(2)]);
        assert_eq!(request.ttl, 14);
    }

    #[test]
    fn exhausted_ttl_only_marks_seen() {
        let (g, states) = line();
        let mut req = request(&g, &states);
        req.ttl = 0;
        let mut st = MoteState::default();
        assert!(mote_forward(m(1), &mut st, &req, &g, &states).is_empty());
        assert!(st.seen.contains(&req.request_id));
        assert_eq!(st.energy_consumed, 0);
    }

    #[test]
    fn sleeping_mote_is_silent() {
        let (g, mut states) = line();
        let req = request(&g, &states);
        release_motes(&[m(1), m(2)], &mut states);
        assert_eq!(states[&m(1)].mode, MoteMode::Sleeping);
        assert_eq!(states[&m(2)].mode, MoteMode::Sleeping);
        assert_eq!(states[&m(3)].mode, MoteMode::Active);
        let mut st = states[&m(1)].clone();
        assert!(mote_forward(m(1), &mut st, &req, &g, &states).is_empty());
        assert_eq!(st, states[&m(1)]);
    }

    #[test]
    fn release_with_empty_path_is_a_no_op() {
        let (_, mut states) = line();
        let before = states.clone();
        release_motes(&[], &mut states);
        assert_eq!(states, before);
    }

    #[test]
    fn base_station_escalates_once() {
        let (g, states) = line();
        let req = request(&g, &states);
        let mut bs1 = BaseStationState::default();
        let mut bs2 = BaseStationState::default();
        assert!(bs1.notify_msc(BS, &req).is_some());
        assert!(bs1.notify_msc(BS, &req).is_none());
        assert!(bs2.notify_msc(NodeId(201), &req).is_some());
        let mut msc = MscState::default();
        assert!(msc.accept(req.request_id));
        assert!(!msc.accept(req.request_id));
    }

    #[test]
    fn steering_boundaries() {
        let bs = Point::new(0.0, 0.0);
        assert!(steer_feasible(bs, Point::new(150.0, 0.0), 150.0));
        assert!(!steer_feasible(bs, Point::new(151.0, 0.0), 150.0));
        assert!(!steer_feasible(bs, Point::new(0.5, 0.0), 0.0));
    }

    #[test]
    fn msc_prefers_nearest_feasible_bs() {
        let loc = Point::new(0.0, 0.0);
        let one = BTreeMap::from([(NodeId(1), Point::new(100.0, 0.0))]);
        let d = msc_decide(1, MS, loc, &one, 150.0, &[]).unwrap();
        assert_eq!(d.outcome, DecisionOutcome::SteerTo(NodeId(1)));

        let two = BTreeMap::from([
            (NodeId(1), Point::new(200.0, 0.0)),
            (NodeId(2), Point::new(0.0, 100.0)),
        ]);
        let d = msc_decide(1, MS, loc, &two, 250.0, &[]).unwrap();
        assert_eq!(d.outcome, DecisionOutcome::SteerTo(NodeId(2)));

        let tied = BTreeMap::from([
            (NodeId(4), Point::new(100.0, 0.0)),
            (NodeId(3), Point::new(-100.0, 0.0)),
        ]);
        let d = msc_decide(1, MS, loc, &tied, 250.0, &[]).unwrap();
        assert_eq!(d.outcome, DecisionOutcome::SteerTo(NodeId(3)));
    }

    #[test]
    fn msc_falls_back_to_satellite() {
        let far = BTreeMap::from([(NodeId(1), Point::new(500.0, 0.0))]);
        let d = msc_decide(7, MS, Point::default(), &far, 150.0, &[NodeId(9), NodeId(8)]).unwrap();
        assert_eq!(
            d.outcome,
            DecisionOutcome::SatelliteFallback {
                satellite: NodeId(8),
                located: true
            }
        );
        let none = msc_decide(7, MS, Point::default(), &BTreeMap::new(), 150.0, &[NodeId(9)]).unwrap();
        assert!(matches!(none.outcome, DecisionOutcome::SatelliteFallback { .. }));
        assert_eq!(
            msc_decide(7, MS, Point::default(), &far, 150.0, &[]),
            Err(HandoffError::NoSatellite)
        );
    }

    #[test]
    fn link_delays_are_additive() {
        let (g, states) = line();
        let mut req = request(&g, &states);
        req.path = vec![m(1), m(2)];
        let delays = LinkDelays::default();
        let t = SimTime::from_secs(10.0);
        let steer = MscDecision {
            request_id: req.request_id,
            ms_id: MS,
            outcome: DecisionOutcome::SteerTo(BS),
        };
        let rec = establish_link(&steer, &req, t, &delays);
        assert_eq!(rec.established_at, SimTime::from_secs(10.5));
        assert_eq!(rec.relay_path, req.path);
        let sat = MscDecision {
            outcome: DecisionOutcome::SatelliteFallback {
                satellite: NodeId(9),
                located: true,
            },
            ..steer
        };
        let rec = establish_link(&sat, &req, t, &delays);
        assert_eq!(rec.established_at, SimTime::from_secs(12.0));
        assert_eq!(rec.endpoint, LinkEndpoint::Satellite(NodeId(9)));
    }
}
