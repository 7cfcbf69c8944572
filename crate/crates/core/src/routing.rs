//! Bellman-Ford distance-vector routing with triggered updates.
//!
//! Metrics are hop counts clamped at [`INFINITY`]. A destination with no
//! entry is unreachable and reads as `INFINITY`. There is no split horizon,
//! poison reverse or route aging.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::node::NodeId;
use crate::world::CommGraph;

/// Metric meaning "unreachable".
pub const INFINITY: u8 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("{sender} is not a neighbor of {owner}")]
    UnknownNeighbor { owner: NodeId, sender: NodeId },
    #[error("{dst} is unreachable from {src}")]
    Unreachable { src: NodeId, dst: NodeId },
    #[error("routing loop through {0}")]
    LoopDetected(NodeId),
    #[error("no routing table for {0}")]
    MissingTable(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    pub metric: u8,
    pub next_hop: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceVector {
    owner: NodeId,
    entries: BTreeMap<NodeId, Route>,
}

/// A neighbor's advertisement. The vector is a copy taken at emission time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteUpdate {
    pub sender: NodeId,
    pub vector: BTreeMap<NodeId, u8>,
    pub triggered: bool,
}

impl DistanceVector {
    /// A table that knows only the route to itself.
    pub fn new(owner: NodeId) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(
            owner,
            Route {
                metric: 0,
                next_hop: owner,
            },
        );
        DistanceVector { owner, entries }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn entries(&self) -> &BTreeMap<NodeId, Route> {
        &self.entries
    }

    pub fn route(&self, dst: NodeId) -> Option<Route> {
        self.entries.get(&dst).copied()
    }

    pub fn metric(&self, dst: NodeId) -> u8 {
        self.entries.get(&dst).map_or(INFINITY, |r| r.metric)
    }

    fn snapshot(&self, triggered: bool) -> RouteUpdate {
        RouteUpdate {
            sender: self.owner,
            vector: self.entries.iter().map(|(&d, r)| (d, r.metric)).collect(),
            triggered,
        }
    }

    /// Full-table advertisement for the periodic timer.
    pub fn periodic_update(&self) -> RouteUpdate {
        self.snapshot(false)
    }

    /// Full-table advertisement sent right after a change.
    pub fn triggered_update(&self) -> RouteUpdate {
        self.snapshot(true)
    }

    /// Relaxes this table against a neighbor's advertisement (unit link
    /// cost) and returns the destinations whose route changed. A non-empty
    /// result obliges the caller to send a triggered update.
    pub fn apply_update(
        &mut self,
        graph: &CommGraph,
        update: &RouteUpdate,
    ) -> Result<BTreeSet<NodeId>, RouteError> {
        if !graph.is_adjacent(self.owner, update.sender) {
            return Err(RouteError::UnknownNeighbor {
                owner: self.owner,
                sender: update.sender,
            });
        }
        let mut changed = BTreeSet::new();
        for (&dst, &advertised) in &update.vector {
            if dst == self.owner {
                continue;
            }
            let candidate = advertised.saturating_add(1).min(INFINITY);
            let adopt = match self.entries.get(&dst) {
                None => candidate < INFINITY,
                Some(current) => {
                    candidate < current.metric
                        || (current.next_hop == update.sender && candidate != current.metric)
                }
            };
            if adopt {
                self.entries.insert(
                    dst,
                    Route {
                        metric: candidate,
                        next_hop: update.sender,
                    },
                );
                changed.insert(dst);
            }
        }
        Ok(changed)
    }
}

/// Follows next-hop pointers from `src` to `dst`. The returned path starts
/// at `src`, ends at `dst`, and has `metric + 1` nodes.
pub fn shortest_path(
    tables: &BTreeMap<NodeId, DistanceVector>,
    src: NodeId,
    dst: NodeId,
) -> Result<Vec<NodeId>, RouteError> {
    let mut path = vec![src];
    let mut visited = BTreeSet::from([src]);
    let mut at = src;
    while at != dst {
        let table = tables.get(&at).ok_or(RouteError::MissingTable(at))?;
        let route = match table.route(dst) {
            Some(r) if r.metric < INFINITY => r,
            _ => return Err(RouteError::Unreachable { src, dst }),
        };
        at = route.next_hop;
        if !visited.insert(at) {
            return Err(RouteError::LoopDetected(at));
        }
        path.push(at);
    }
    Ok(path)
}
