//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use handoff_core::engine::RngStream;
use handoff_core::queues::{EnqueueOutcome, Packet, StrictPriorityQueue, PRIORITY_CLASSES};
use handoff_core::routing::{DistanceVector, RouteUpdate};
use handoff_core::world::{CommGraph, RadioNode};
use handoff_core::{NodeId, NodeKind, Point, RadioProfile};

/// Hop distances from `src` over an undirected edge list.
pub fn bfs_hops(nodes: &[NodeId], edges: &[(NodeId, NodeId)], src: NodeId) -> BTreeMap<NodeId, u32> {
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = nodes.iter().map(|&n| (n, Vec::new())).collect();
    for &(a, b) in edges {
        adj.get_mut(&a).unwrap().push(b);
        adj.get_mut(&b).unwrap().push(a);
    }
    let mut dist = BTreeMap::from([(src, 0)]);
    let mut frontier = VecDeque::from([src]);
    while let Some(n) = frontier.pop_front() {
        let d = dist[&n];
        for &m in &adj[&n] {
            if let Entry::Vacant(slot) = dist.entry(m) {
                slot.insert(d + 1);
                frontier.push_back(m);
            }
        }
    }
    dist
}

/// Fewest motes on any MS -> motes -> BS path, found by BFS over the motes
/// only. `None` when no such path exists.
pub fn min_motes_to_bs(graph: &CommGraph, ms: NodeId) -> Option<u32> {
    let is_mote = |n: NodeId| graph.kind(n) == Some(NodeKind::Mote);
    let mut depth: BTreeMap<NodeId, u32> = BTreeMap::new();
    let mut frontier = VecDeque::new();
    for m in graph.neighbors(ms).filter(|&n| is_mote(n)) {
        depth.insert(m, 1);
        frontier.push_back(m);
    }
    let mut best: Option<u32> = None;
    while let Some(m) = frontier.pop_front() {
        let d = depth[&m];
        if graph.neighbors(m).any(|n| graph.kind(n) == Some(NodeKind::BaseStation)) {
            best = Some(best.map_or(d, |b| b.min(d)));
        }
        for n in graph.neighbors(m).filter(|&n| is_mote(n)) {
            if let Entry::Vacant(slot) = depth.entry(n) {
                slot.insert(d + 1);
                frontier.push_back(n);
            }
        }
    }
    best
}

/// A random field: one MS, one or two BSs and up to `max_motes` motes, all
/// with default radio profiles, scattered over a square of side `side`.
pub fn random_field(rng: &mut RngStream, max_motes: u64, side: f64) -> (Vec<RadioNode>, NodeId) {
    let motes = 1 + rng.below(max_motes);
    let stations = 1 + rng.below(2);
    let mut nodes = Vec::new();
    let mut push = |rng: &mut RngStream, id: u32, kind: NodeKind| {
        nodes.push(RadioNode {
            id: NodeId(id),
            kind,
            position: Point::new(rng.uniform(0.0, side), rng.uniform(0.0, side)),
            profile: RadioProfile::default_for(kind),
        })
    };
    push(rng, 0, NodeKind::MobileStation);
    for b in 0..stations {
        push(rng, 100 + b as u32, NodeKind::BaseStation);
    }
    for m in 0..motes {
        push(rng, 1 + m as u32, NodeKind::Mote);
    }
    (nodes, NodeId(0))
}

/// Runs every table to quiescence: each node advertises once, then every
/// change triggers a fresh advertisement, processed first in first out.
pub fn converge(graph: &CommGraph, nodes: &[NodeId]) -> BTreeMap<NodeId, DistanceVector> {
    let mut tables: BTreeMap<NodeId, DistanceVector> =
        nodes.iter().map(|&n| (n, DistanceVector::new(n))).collect();
    let mut pending: VecDeque<RouteUpdate> = tables.values().map(|t| t.periodic_update()).collect();
    while let Some(update) = pending.pop_front() {
        let neighbors: Vec<NodeId> = graph.neighbors(update.sender).collect();
        for n in neighbors {
            let table = tables.get_mut(&n).unwrap();
            if !table.apply_update(graph, &update).unwrap().is_empty() {
                pending.push_back(table.triggered_update());
            }
        }
    }
    tables
}

/// Straightforward model of a strict-priority queue with per-class capacity.
#[derive(Default)]
pub struct QueueModel {
    pub classes: [VecDeque<u64>; PRIORITY_CLASSES],
    pub queued: u64,
    pub dequeued: u64,
    pub dropped: u64,
    pub peak: usize,
}

impl QueueModel {
    pub fn len(&self) -> usize {
        self.classes.iter().map(VecDeque::len).sum()
    }
}

/// Drives `steps` random operations through a real queue and the model,
/// checking them against each other after every step.
pub fn queue_trace(seed: u64, steps: usize, capacity: usize) -> Result<(), String> {
    let mut rng = RngStream::new(seed);
    let mut q: StrictPriorityQueue<()> = StrictPriorityQueue::new(capacity);
    let mut model = QueueModel::default();
    for step in 0..steps {
        if rng.draw() < 0.55 {
            let class = rng.below(PRIORITY_CLASSES as u64) as u8;
            let id = step as u64;
            let outcome = q.enqueue(Packet {
                id,
                src: NodeId(0),
                dst: NodeId(1),
                priority_class: class,
                size: 1,
                body: (),
            });
            let slot = &mut model.classes[class as usize];
            model.queued += 1;
            let expected = if slot.len() < capacity {
                slot.push_back(id);
                EnqueueOutcome::Accepted
            } else {
                model.dropped += 1;
                EnqueueOutcome::Dropped
            };
            model.peak = model.peak.max(model.len());
            if outcome != expected {
                return Err(format!("step {step}: enqueue gave {outcome:?}, model {expected:?}"));
            }
        } else {
            let got = q.dequeue();
            let lowest = model.classes.iter().position(|c| !c.is_empty());
            let expected = lowest.map(|c| model.classes[c].pop_front().unwrap());
            if expected.is_some() {
                model.dequeued += 1;
            }
            if let Some(p) = &got {
                let class = p.priority_class as usize;
                if lowest.is_some_and(|l| l < class) {
                    return Err(format!("step {step}: served class {class} ahead of a lower class"));
                }
            }
            if got.as_ref().map(|p| p.id) != expected {
                return Err(format!("step {step}: dequeued {:?}, model {expected:?}", got.map(|p| p.id)));
            }
        }
        let c = q.counters();
        if c.queued != c.dequeued + c.dropped + q.len() as u64 {
            return Err(format!("step {step}: conservation broken: {c:?} with {} resident", q.len()));
        }
        if (c.queued, c.dequeued, c.dropped, c.peak_size, q.len())
            != (model.queued, model.dequeued, model.dropped, model.peak, model.len())
        {
            return Err(format!("step {step}: counters {c:?} disagree with the model"));
        }
    }
    Ok(())
}

/// Nodes of a random graph on `n` vertices with edge probability `p`.
pub fn random_graph(rng: &mut RngStream, n: u32, p: f64) -> (Vec<NodeId>, Vec<(NodeId, NodeId)>, CommGraph) {
    let nodes: Vec<NodeId> = (0..n).map(NodeId).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.draw() < p {
                edges.push((NodeId(a), NodeId(b)));
            }
        }
    }
    let graph = CommGraph::from_edges(nodes.iter().map(|&id| (id, NodeKind::Mote)), edges.iter().copied()).unwrap();
    (nodes, edges, graph)
}

pub fn set_of(ids: &[u32]) -> BTreeSet<NodeId> {
    ids.iter().map(|&i| NodeId(i)).collect()
}
