//! Fixtures shared by the benchmarks.

use handoff_core::world::CommGraph;
use handoff_core::{NodeId, NodeKind};

/// An `n` by `n` grid of motes with 4-neighbour links, plus a mobile station
/// attached to one corner and a base station attached to the opposite one.
pub fn mote_grid(n: u32) -> (CommGraph, NodeId, NodeId) {
    let id = |r: u32, c: u32| NodeId(r * n + c);
    let ms = NodeId(n * n);
    let bs = NodeId(n * n + 1);
    let mut kinds: Vec<(NodeId, NodeKind)> = (0..n * n).map(|i| (NodeId(i), NodeKind::Mote)).collect();
    kinds.push((ms, NodeKind::MobileStation));
    kinds.push((bs, NodeKind::BaseStation));
    let mut edges = vec![(ms, id(0, 0)), (id(n - 1, n - 1), bs)];
    for r in 0..n {
        for c in 0..n {
            if c + 1 < n {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < n {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    let graph = CommGraph::from_edges(kinds, edges).expect("grid edges are valid");
    (graph, ms, bs)
}
