use std::collections::BTreeMap;

use crate::engine::{EventQueue, SimTime};
use crate::node::{NodeId, NodeKind};
use crate::world::{CommGraph, Point};

use super::{
    make_discovery, mote_forward, BaseStationState, DiscoveryRequest, Escalation, ForwardAction,
    HandoffError, MoteState, RequestIds,
};

/// Per-hop latency of the protocol-level flood.
pub const FLOOD_HOP_DELAY: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct FloodOutcome {
    pub request: DiscoveryRequest,
    /// First copy escalated by each base station, in arrival order.
    pub escalations: Vec<(SimTime, Escalation)>,
    /// `(transmitter, request_id)` for every transmission, in time order.
    pub transmissions: Vec<(NodeId, u64)>,
}

/// Floods one discovery from `ms` over a fixed topology with a uniform hop
/// delay and no losses, until no copies remain in flight.
///
/// Every hop takes the same time, so the first copy to reach any mote has
/// come along a minimum-hop route.
pub fn flood_on_graph(
    graph: &CommGraph,
    ms: NodeId,
    location: Point,
    ttl: u32,
    ids: &mut RequestIds,
    motes: &mut BTreeMap<NodeId, MoteState>,
) -> Result<FloodOutcome, HandoffError> {
    let request = make_discovery(ids, ms, location, SimTime::ZERO, ttl, graph, motes)?;
    let mut queue: EventQueue<DiscoveryRequest> = EventQueue::new();
    let mut transmissions = vec![(ms, request.request_id)];
    for mote in graph.neighbors_of_kind(ms, NodeKind::Mote) {
        if motes.get(&mote).is_none_or(MoteState::is_active) {
            queue
                .schedule_in(FLOOD_HOP_DELAY, mote, request.clone())
                .expect("hop delay is positive");
        }
    }

    let mut stations: BTreeMap<NodeId, BaseStationState> = BTreeMap::new();
    let mut escalations = Vec::new();
    while let Some(ev) = queue.pop_until(SimTime::from_secs(f64::MAX)) {
        let at = ev.target;
        match graph.kind(at) {
            Some(NodeKind::BaseStation) => {
                if let Some(esc) = stations.entry(at).or_default().notify_msc(at, &ev.payload) {
                    escalations.push((ev.fire_time, esc));
                }
            }
            Some(NodeKind::Mote) => {
                let mut state = motes.get(&at).cloned().unwrap_or_default();
                let actions = mote_forward(at, &mut state, &ev.payload, graph, motes);
                motes.insert(at, state);
                for action in actions {
                    transmissions.push((at, action.request().request_id));
                    let targets = match &action {
                        ForwardAction::Unicast { to, .. } => vec![*to],
                        ForwardAction::Broadcast { targets, .. } => targets.clone(),
                    };
                    for to in targets {
                        queue
                            .schedule_in(FLOOD_HOP_DELAY, to, action.request().clone())
                            .expect("hop delay is positive");
                    }
                }
            }
            _ => {}
        }
    }
    Ok(FloodOutcome {
        request,
        escalations,
        transmissions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flood_reaches_bs_over_line() {
        let (ms, bs) = (NodeId(100), NodeId(200));
        let kinds = [
            (ms, NodeKind::MobileStation),
            (bs, NodeKind::BaseStation),
            (NodeId(1), NodeKind::Mote),
            (NodeId(2), NodeKind::Mote),
        ];
        let g = CommGraph::from_edges(kinds, [(ms, NodeId(1)), (NodeId(1), NodeId(2)), (NodeId(2), bs)]).unwrap();
        let mut motes = BTreeMap::new();
        let out = flood_on_graph(&g, ms, Point::default(), 16, &mut RequestIds::default(), &mut motes).unwrap();
        assert_eq!(out.escalations.len(), 1);
        let (_, esc) = &out.escalations[0];
        assert_eq!(esc.bs, bs);
        assert_eq!(esc.request.path, vec![NodeId(1), NodeId(2)]);
        assert_eq!(esc.request.ttl, 14);
    }

    #[test]
    fn ttl_bounds_the_flood() {
        let (ms, bs) = (NodeId(100), NodeId(200));
        let mut kinds = vec![(ms, NodeKind::MobileStation), (bs, NodeKind::BaseStation)];
        kinds.extend((1..=3).map(|i| (NodeId(i), NodeKind::Mote)));
        let edges = [
            (ms, NodeId(1)),
            (NodeId(1), NodeId(2)),
            (NodeId(2), NodeId(3)),
            (NodeId(3), bs),
        ];
        let g = CommGraph::from_edges(kinds, edges).unwrap();
        let reach = |ttl| {
            flood_on_graph(&g, ms, Point::default(), ttl, &mut RequestIds::default(), &mut BTreeMap::new())
                .unwrap()
                .escalations
                .len()
        };
        assert_eq!(reach(2), 0);
        assert_eq!(reach(3), 1);
    }
}
