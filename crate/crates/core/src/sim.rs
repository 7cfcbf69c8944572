//! Full-stack run of a scenario.
//!
//! Terrestrial radios share one broadcast channel. Each transmission is
//! heard by every other awake terrestrial node, and the outcome at each
//! receiver follows the propagation model. The satellite is a bent pipe: it
//! relays every broadcast it overhears and carries the MS/MSC traffic that
//! goes over it. The steered beam between a base station and a mobile
//! station is a point-to-point link outside the shared channel.
//!
//! Everything that can tie is ordered by node id, and all randomness comes
//! from one seeded stream, so a run is a pure function of its scenario.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{EngineError, EventQueue, RngStream, SimTime};
use crate::handoff::{
    establish_direct_link, establish_link, make_discovery, mote_forward, msc_decide, msc_decide_unlocated,
    release_motes, steer_feasible, BaseStationState, DecisionOutcome, DiscoveryRequest, Escalation,
    ForwardAction, HandoffError, LinkEndpoint, LinkRecord, MoteMode, MoteState, MscDecision, MscState,
    RequestIds,
};
use crate::node::{NodeId, NodeKind};
use crate::queues::{FifoQueue, Packet, StrictPriorityQueue, CONTROL_CLASS, DATA_CLASS};
use crate::routing::{shortest_path, DistanceVector, RouteUpdate};
use crate::scenario::Scenario;
use crate::stats::{counters::*, StatsLedger};
use crate::world::{link_profile, packet_outcome, received_power, CommGraph, PacketOutcome, Point, WorldError};

/// IP hop limit stamped on application packets.
pub const APP_IP_TTL: u64 = 64;
const DATA_SIZE: u32 = 512;
const CONTROL_SIZE: u32 = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Handoff(#[from] HandoffError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

/// A discovery as emitted by its mobile station.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryTrace {
    pub request_id: u64,
    pub ms_id: NodeId,
    pub emitted_at: SimTime,
    pub location: Point,
    /// Base stations that received a copy, with the path it took.
    pub deliveries: Vec<(SimTime, NodeId, Vec<NodeId>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseRecord {
    pub at: SimTime,
    pub mote: NodeId,
    pub energy: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub ledger: StatsLedger,
    pub links: Vec<LinkRecord>,
    /// Distance-vector route between the first and last relay mote of each
    /// link, in step with `links`. Empty when the link has no relay or the
    /// tables had no route.
    pub dv_paths: Vec<Vec<NodeId>>,
    pub decisions: Vec<(SimTime, MscDecision)>,
    pub discoveries: Vec<DiscoveryTrace>,
    pub motes: BTreeMap<NodeId, MoteState>,
    pub releases: Vec<ReleaseRecord>,
    pub events: usize,
    pub dispatch_log: String,
    pub digest: String,
}

/// Hex SHA-256 of a dispatch log.
pub fn log_digest(log: &str) -> String {
    hex::encode(Sha256::digest(log.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Data,
    Discovery(DiscoveryRequest),
    Dv(RouteUpdate),
}

#[derive(Debug, Clone, PartialEq)]
struct Frame {
    /// `None` for a broadcast.
    dst: Option<NodeId>,
    body: Body,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SatPayload {
    Attach { ms: NodeId, request_id: u64 },
    Locate { ms: NodeId },
    Data { ms: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
enum Ev {
    CoverageCheck,
    AppTick,
    DvPeriodic,
    TxEnd,
    DiscoveryTimeout(u64),
    Escalate(Escalation),
    LinkUp { request_id: u64, record: LinkRecord },
    SatUplinkDone,
    SatRelay(SatPayload),
    SatDeliver(SatPayload),
    BeamDeliver,
}

impl Ev {
    fn label(&self) -> String {
        match self {
            Ev::CoverageCheck => "coverage".into(),
            Ev::AppTick => "app".into(),
            Ev::DvPeriodic => "dv-periodic".into(),
            Ev::TxEnd => "tx-end".into(),
            Ev::DiscoveryTimeout(id) => format!("discovery-timeout {id}"),
            Ev::Escalate(e) => format!("escalate {} from {}", e.request.request_id, e.bs),
            Ev::LinkUp { request_id, .. } => format!("link-up {request_id}"),
            Ev::SatUplinkDone => "sat-uplink-done".into(),
            Ev::SatRelay(p) => format!("sat-relay {p:?}"),
            Ev::SatDeliver(p) => format!("sat-deliver {p:?}"),
            Ev::BeamDeliver => "beam-deliver".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MsLink {
    Unlinked,
    Cellular(NodeId),
    /// Waiting on a mote discovery, or on the link it led to.
    Discovering(u64),
    /// Waiting on a satellite search started without motes.
    SatSearching(u64),
    Steered(NodeId),
    Satellite(NodeId),
}

impl MsLink {
    fn pending(self) -> Option<u64> {
        match self {
            MsLink::Discovering(id) | MsLink::SatSearching(id) => Some(id),
            _ => None,
        }
    }
}

struct Radio {
    queue: StrictPriorityQueue<Frame>,
    in_flight: Option<Packet<Frame>>,
}

struct MobileState {
    link: MsLink,
    uplink: FifoQueue<SatPayload>,
    uplink_busy: bool,
}

struct Sim<'a> {
    s: &'a Scenario,
    queue: EventQueue<Ev>,
    rng: RngStream,
    ledger: StatsLedger,
    radios: BTreeMap<NodeId, Radio>,
    mobiles: BTreeMap<NodeId, MobileState>,
    motes: BTreeMap<NodeId, MoteState>,
    tables: BTreeMap<NodeId, DistanceVector>,
    stations: BTreeMap<NodeId, BaseStationState>,
    bs_positions: BTreeMap<NodeId, Point>,
    satellites: Vec<NodeId>,
    msc: NodeId,
    msc_state: MscState,
    ids: RequestIds,
    next_packet: u64,
    links: Vec<LinkRecord>,
    dv_paths: Vec<Vec<NodeId>>,
    decisions: Vec<(SimTime, MscDecision)>,
    discoveries: Vec<DiscoveryTrace>,
    releases: Vec<ReleaseRecord>,
    log: String,
}

/// Runs `s` from time zero to its duration.
pub fn run(s: &Scenario) -> Result<RunReport, SimError> {
    s.validate().map_err(|e| SimError::Scenario(e.to_string()))?;
    let mut sim = Sim::new(s);
    sim.prime()?;
    let mut events = 0;
    while let Some(ev) = sim.queue.pop_until(s.duration) {
        events += 1;
        writeln!(
            sim.log,
            "{} {:.9} {} {}",
            ev.seq,
            ev.fire_time.as_secs(),
            ev.target,
            ev.payload.label()
        )
        .unwrap();
        sim.dispatch(ev.target, ev.payload)?;
    }
    sim.queue.advance_to(s.duration);
    let digest = log_digest(&sim.log);
    Ok(RunReport {
        ledger: sim.ledger,
        links: sim.links,
        dv_paths: sim.dv_paths,
        decisions: sim.decisions,
        discoveries: sim.discoveries,
        motes: sim.motes,
        releases: sim.releases,
        events,
        dispatch_log: sim.log,
        digest,
    })
}

impl<'a> Sim<'a> {
    fn new(s: &'a Scenario) -> Self {
        let cap = s.params.queue_capacity;
        let radios = s
            .nodes
            .iter()
            .filter(|n| n.kind.is_terrestrial_radio())
            .map(|n| {
                (
                    n.id,
                    Radio {
                        queue: StrictPriorityQueue::new(cap),
                        in_flight: None,
                    },
                )
            })
            .collect();
        let mobiles = s
            .ids_of(NodeKind::MobileStation)
            .into_iter()
            .map(|id| {
                (
                    id,
                    MobileState {
                        link: MsLink::Unlinked,
                        uplink: FifoQueue::new(cap),
                        uplink_busy: false,
                    },
                )
            })
            .collect();
        let mote_ids = s.ids_of(NodeKind::Mote);
        let bs_positions = s
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::BaseStation)
            .map(|n| (n.id, n.position))
            .collect();
        // Without an explicit MSC node the decisions are attributed to a
        // virtual id past every real one.
        let msc = s
            .ids_of(NodeKind::Msc)
            .first()
            .copied()
            .unwrap_or(NodeId(u32::MAX));
        Sim {
            s,
            queue: EventQueue::new(),
            rng: RngStream::new(s.seed),
            ledger: StatsLedger::new(),
            radios,
            mobiles,
            motes: mote_ids.iter().map(|&m| (m, MoteState::default())).collect(),
            tables: mote_ids.iter().map(|&m| (m, DistanceVector::new(m))).collect(),
            stations: BTreeMap::new(),
            bs_positions,
            satellites: s.ids_of(NodeKind::Satellite),
            msc,
            msc_state: MscState::default(),
            ids: RequestIds::default(),
            next_packet: 0,
            links: Vec::new(),
            dv_paths: Vec::new(),
            decisions: Vec::new(),
            discoveries: Vec::new(),
            releases: Vec::new(),
            log: String::new(),
        }
    }

    fn prime(&mut self) -> Result<(), SimError> {
        let p = self.s.params;
        let mobiles: Vec<NodeId> = self.mobiles.keys().copied().collect();
        for &ms in &mobiles {
            self.queue.schedule(SimTime::ZERO, ms, Ev::CoverageCheck)?;
        }
        for &ms in &mobiles {
            let phase = self.rng.uniform(0.0, p.app_interval);
            self.queue.schedule(SimTime::from_secs(phase), ms, Ev::AppTick)?;
        }
        let motes: Vec<NodeId> = self.motes.keys().copied().collect();
        for m in motes {
            let phase = self.rng.uniform(0.0, p.dv_period);
            self.queue.schedule(SimTime::from_secs(phase), m, Ev::DvPeriodic)?;
        }
        Ok(())
    }

    fn now(&self) -> SimTime {
        self.queue.now()
    }

    fn count(&mut self, key: crate::stats::CounterKey, delta: u64) {
        self.ledger.record(key, delta).expect("registered counter");
    }

    fn sleeping(&self) -> BTreeSet<NodeId> {
        self.motes
            .iter()
            .filter(|(_, st)| !st.is_active())
            .map(|(&id, _)| id)
            .collect()
    }

    fn graph(&self) -> Result<CommGraph, SimError> {
        Ok(self.s.graph_at(self.now(), &self.sleeping())?)
    }

    fn position(&self, id: NodeId) -> Point {
        let node = self.s.node(id).expect("known node");
        self.s.position_at(node, self.now())
    }

    fn mote_awake(&self, id: NodeId) -> bool {
        self.motes.get(&id).is_none_or(MoteState::is_active)
    }

    fn dispatch(&mut self, at: NodeId, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::CoverageCheck => self.on_coverage(at),
            Ev::AppTick => self.on_app_tick(at),
            Ev::DvPeriodic => self.on_dv_periodic(at),
            Ev::TxEnd => self.on_tx_end(at),
            Ev::DiscoveryTimeout(id) => self.on_discovery_timeout(at, id),
            Ev::Escalate(esc) => self.on_escalate(esc),
            Ev::LinkUp { request_id, record } => {
                self.on_link_up(at, request_id, record);
                Ok(())
            }
            Ev::SatUplinkDone => {
                self.mobiles.get_mut(&at).expect("mobile").uplink_busy = false;
                self.pump_uplink(at)
            }
            Ev::SatRelay(p) => {
                self.count(SAT_FRAMES_RELAYED, 1);
                let to = match p {
                    SatPayload::Locate { ms } => ms,
                    _ => self.msc,
                };
                self.queue.schedule_in(self.s.params.satellite_hop_delay, to, Ev::SatDeliver(p))?;
                Ok(())
            }
            Ev::SatDeliver(p) => self.on_sat_deliver(p),
            Ev::BeamDeliver => {
                self.count(LINK_FRAMES_RECEIVED, 1);
                self.deliver_app_data(APP_IP_TTL);
                Ok(())
            }
        }
    }

    // ---- mobile stations ----

    fn on_coverage(&mut self, ms: NodeId) -> Result<(), SimError> {
        let graph = self.graph()?;
        let nearest_bs = graph
            .neighbors_of_kind(ms, NodeKind::BaseStation)
            .min_by(|a, b| {
                let here = self.position(ms);
                self.bs_positions[a]
                    .distance(here)
                    .total_cmp(&self.bs_positions[b].distance(here))
                    .then(a.cmp(b))
            });
        let link = self.mobiles[&ms].link;
        let next = match (link, nearest_bs) {
            (MsLink::Satellite(_), _) => None,
            (MsLink::Cellular(bs), _) if graph.is_adjacent(ms, bs) => None,
            (MsLink::Steered(bs), _) if steer_feasible(self.bs_positions[&bs], self.position(ms), self.s.params.max_steer_range) => None,
            (_, Some(bs)) => Some(MsLink::Cellular(bs)),
            (MsLink::Discovering(_) | MsLink::SatSearching(_), None) => None,
            (MsLink::Unlinked | MsLink::Cellular(_) | MsLink::Steered(_), None) => {
                self.start_handoff(ms, &graph)?;
                None
            }
        };
        if let Some(link) = next {
            self.mobiles.get_mut(&ms).unwrap().link = link;
        }
        let interval = self.s.params.coverage_check_interval;
        self.queue.schedule_in(interval, ms, Ev::CoverageCheck)?;
        Ok(())
    }

    fn start_handoff(&mut self, ms: NodeId, graph: &CommGraph) -> Result<(), SimError> {
        let here = self.position(ms);
        let p = self.s.params;
        let now = self.now();
        match make_discovery(&mut self.ids, ms, here, now, p.default_ttl, graph, &self.motes) {
            Ok(req) => {
                let id = req.request_id;
                self.discoveries.push(DiscoveryTrace {
                    request_id: id,
                    ms_id: ms,
                    emitted_at: req.emitted_at,
                    location: here,
                    deliveries: Vec::new(),
                });
                self.mobiles.get_mut(&ms).unwrap().link = MsLink::Discovering(id);
                self.send_terrestrial(ms, None, Body::Discovery(req), CONTROL_CLASS)?;
                self.queue.schedule_in(p.discovery_timeout, ms, Ev::DiscoveryTimeout(id))?;
                Ok(())
            }
            Err(HandoffError::NoMotesInRange(_)) => self.satellite_attach(ms),
            Err(e) => Err(e.into()),
        }
    }

    /// Reaches the MSC over the satellite without a position fix.
    fn satellite_attach(&mut self, ms: NodeId) -> Result<(), SimError> {
        if self.satellites.is_empty() {
            return Err(HandoffError::NoSatellite.into());
        }
        let request_id = self.ids.next_id();
        self.mobiles.get_mut(&ms).unwrap().link = MsLink::SatSearching(request_id);
        self.uplink(ms, SatPayload::Attach { ms, request_id })
    }

    fn on_discovery_timeout(&mut self, ms: NodeId, request_id: u64) -> Result<(), SimError> {
        let still_waiting = self.mobiles[&ms].link == MsLink::Discovering(request_id);
        if still_waiting && !self.msc_state.has_decided(request_id) {
            self.satellite_attach(ms)?;
        }
        Ok(())
    }

    fn on_link_up(&mut self, ms: NodeId, request_id: u64, record: LinkRecord) {
        let mobile = self.mobiles.get_mut(&ms).expect("mobile");
        if mobile.link.pending() != Some(request_id) {
            writeln!(self.log, "  stale link for request {request_id}").unwrap();
            return;
        }
        mobile.link = match record.endpoint {
            LinkEndpoint::Bs(bs) => MsLink::Steered(bs),
            LinkEndpoint::Satellite(sat) => MsLink::Satellite(sat),
        };
        let at = self.now();
        release_motes(&record.relay_path, &mut self.motes);
        for &mote in &record.relay_path {
            if let Some(radio) = self.radios.get_mut(&mote) {
                while radio.queue.dequeue().is_some() {}
                radio.in_flight = None;
            }
            self.releases.push(ReleaseRecord {
                at,
                mote,
                energy: self.motes[&mote].energy_consumed,
            });
        }
        let dv_path = match (record.relay_path.first(), record.relay_path.last()) {
            (Some(&a), Some(&b)) => shortest_path(&self.tables, a, b).unwrap_or_default(),
            _ => Vec::new(),
        };
        self.dv_paths.push(dv_path);
        self.links.push(record);
    }

    fn on_app_tick(&mut self, ms: NodeId) -> Result<(), SimError> {
        self.count(UDP_FROM_APP, 1);
        self.count(IP_OUT_REQUESTS, 1);
        match self.mobiles[&ms].link {
            MsLink::Cellular(bs) => self.send_terrestrial(ms, Some(bs), Body::Data, DATA_CLASS)?,
            MsLink::Steered(_) => {
                let tx = self.s.params.tx_time;
                self.count(LINK_FRAMES_SENT, 1);
                self.count(LINK_UTILIZATION, (tx * 1000.0).round() as u64);
                self.queue.schedule_in(tx, ms, Ev::BeamDeliver)?;
            }
            MsLink::Satellite(_) => self.uplink(ms, SatPayload::Data { ms })?,
            MsLink::Unlinked | MsLink::Discovering(_) | MsLink::SatSearching(_) => {}
        }
        let interval = self.s.params.app_interval;
        self.queue.schedule_in(interval, ms, Ev::AppTick)?;
        Ok(())
    }

    fn deliver_app_data(&mut self, ttl: u64) {
        self.count(IP_IN_RECEIVED, 1);
        self.count(IP_IN_DELIVERS, 1);
        self.count(IP_IN_DELIVERS_TTL_SUM, ttl);
        self.count(UDP_TO_APP, 1);
    }

    // ---- satellite ----

    fn uplink(&mut self, ms: NodeId, payload: SatPayload) -> Result<(), SimError> {
        let id = self.packet_id();
        let mobile = self.mobiles.get_mut(&ms).expect("mobile");
        let packet = Packet {
            id,
            src: ms,
            dst: self.msc,
            priority_class: CONTROL_CLASS,
            size: CONTROL_SIZE,
            body: payload,
        };
        mobile.uplink.enqueue(packet);
        let depth = mobile.uplink.len() as u64;
        self.count(FIFO_QUEUED, 1);
        self.ledger.raise_to(FIFO_PEAK_SIZE, depth).expect("registered counter");
        self.pump_uplink(ms)
    }

    fn pump_uplink(&mut self, ms: NodeId) -> Result<(), SimError> {
        let mobile = self.mobiles.get_mut(&ms).expect("mobile");
        if mobile.uplink_busy {
            return Ok(());
        }
        let Some(packet) = mobile.uplink.dequeue() else {
            return Ok(());
        };
        mobile.uplink_busy = true;
        self.count(FIFO_DEQUEUED, 1);
        self.count(SAT_FRAMES_SENT, 1);
        let p = self.s.params;
        let sat = self.satellites[0];
        self.queue.schedule_in(p.tx_time, ms, Ev::SatUplinkDone)?;
        self.queue.schedule_in(p.satellite_hop_delay, sat, Ev::SatRelay(packet.body))?;
        Ok(())
    }

    fn on_sat_deliver(&mut self, payload: SatPayload) -> Result<(), SimError> {
        self.count(SAT_FRAMES_RECEIVED, 1);
        match payload {
            SatPayload::Data { .. } => self.deliver_app_data(APP_IP_TTL),
            SatPayload::Locate { .. } => {}
            SatPayload::Attach { ms, request_id } => {
                if self.msc_state.accept(request_id) {
                    let decision = msc_decide_unlocated(request_id, ms, &self.satellites)?;
                    let record = establish_direct_link(&decision, self.now(), &self.s.params.link_delays());
                    self.record_decision(decision);
                    self.queue.schedule(record.established_at, ms, Ev::LinkUp { request_id, record })?;
                }
            }
        }
        Ok(())
    }

    // ---- MSC ----

    fn record_decision(&mut self, decision: MscDecision) {
        writeln!(
            self.log,
            "  decision request={} ms={} {:?}",
            decision.request_id, decision.ms_id, decision.outcome
        )
        .unwrap();
        self.decisions.push((self.now(), decision));
    }

    fn on_escalate(&mut self, esc: Escalation) -> Result<(), SimError> {
        let req = esc.request;
        if !self.msc_state.accept(req.request_id) {
            return Ok(());
        }
        let decision = msc_decide(
            req.request_id,
            req.ms_id,
            req.ms_location,
            &self.bs_positions,
            self.s.params.max_steer_range,
            &self.satellites,
        )?;
        let record = establish_link(&decision, &req, self.now(), &self.s.params.link_delays());
        self.record_decision(decision);
        if let DecisionOutcome::SatelliteFallback { satellite, .. } = decision.outcome {
            self.count(SAT_FRAMES_SENT, 1);
            let hop = self.s.params.satellite_hop_delay;
            self.queue.schedule_in(hop, satellite, Ev::SatRelay(SatPayload::Locate { ms: req.ms_id }))?;
        }
        let request_id = req.request_id;
        self.queue.schedule(record.established_at, req.ms_id, Ev::LinkUp { request_id, record })?;
        Ok(())
    }

    // ---- motes ----

    fn on_dv_periodic(&mut self, mote: NodeId) -> Result<(), SimError> {
        if !self.mote_awake(mote) {
            return Ok(());
        }
        let update = self.tables[&mote].periodic_update();
        self.send_dv(mote, update)?;
        let period = self.s.params.dv_period;
        self.queue.schedule_in(period, mote, Ev::DvPeriodic)?;
        Ok(())
    }

    fn send_dv(&mut self, mote: NodeId, update: RouteUpdate) -> Result<(), SimError> {
        if !self.motes.get_mut(&mote).expect("mote").charge_transmission() {
            return Ok(());
        }
        self.count(UDP_FROM_APP, 1);
        self.count(IP_OUT_REQUESTS, 1);
        self.send_terrestrial(mote, None, Body::Dv(update), CONTROL_CLASS)
    }

    fn on_dv_received(&mut self, mote: NodeId, update: RouteUpdate, graph: &CommGraph) -> Result<(), SimError> {
        self.count(BF_UPDATES_RECEIVED, 1);
        self.count(IP_IN_RECEIVED, 1);
        self.count(IP_IN_DELIVERS, 1);
        self.count(IP_IN_DELIVERS_TTL_SUM, 1);
        self.count(UDP_TO_APP, 1);
        let table = self.tables.get_mut(&mote).expect("mote table");
        let Ok(changed) = table.apply_update(graph, &update) else {
            return Ok(());
        };
        if !changed.is_empty() {
            let triggered = table.triggered_update();
            self.count(BF_TRIGGERED_UPDATES, 1);
            self.send_dv(mote, triggered)?;
        }
        Ok(())
    }

    fn on_discovery_at_mote(&mut self, mote: NodeId, req: DiscoveryRequest, graph: &CommGraph) -> Result<(), SimError> {
        let mut state = self.motes[&mote].clone();
        let actions = mote_forward(mote, &mut state, &req, graph, &self.motes);
        self.motes.insert(mote, state);
        for action in actions {
            match action {
                ForwardAction::Unicast { to, request } => {
                    self.send_terrestrial(mote, Some(to), Body::Discovery(request), CONTROL_CLASS)?
                }
                ForwardAction::Broadcast { request, .. } => {
                    self.send_terrestrial(mote, None, Body::Discovery(request), CONTROL_CLASS)?
                }
            }
        }
        Ok(())
    }

    fn on_discovery_at_bs(&mut self, bs: NodeId, req: DiscoveryRequest) -> Result<(), SimError> {
        self.count(IP_IN_DELIVERS_TTL_SUM, req.ttl as u64);
        let at = self.now();
        if let Some(trace) = self.discoveries.iter_mut().find(|t| t.request_id == req.request_id) {
            trace.deliveries.push((at, bs, req.path.clone()));
        }
        if let Some(esc) = self.stations.entry(bs).or_default().notify_msc(bs, &req) {
            let delay = self.s.params.backhaul_delay;
            self.queue.schedule_in(delay, self.msc, Ev::Escalate(esc))?;
        }
        Ok(())
    }

    // ---- shared channel ----

    fn packet_id(&mut self) -> u64 {
        self.next_packet += 1;
        self.next_packet
    }

    fn send_terrestrial(&mut self, from: NodeId, dst: Option<NodeId>, body: Body, class: u8) -> Result<(), SimError> {
        let id = self.packet_id();
        let size = if class == DATA_CLASS { DATA_SIZE } else { CONTROL_SIZE };
        let packet = Packet {
            id,
            src: from,
            dst: dst.unwrap_or(from),
            priority_class: class,
            size,
            body: Frame { dst, body },
        };
        let radio = self.radios.get_mut(&from).expect("terrestrial radio");
        radio.queue.enqueue(packet);
        self.count(STRICT_QUEUED, 1);
        self.pump_radio(from)
    }

    fn pump_radio(&mut self, node: NodeId) -> Result<(), SimError> {
        let radio = self.radios.get_mut(&node).expect("terrestrial radio");
        if radio.in_flight.is_some() {
            return Ok(());
        }
        let Some(packet) = radio.queue.dequeue() else {
            return Ok(());
        };
        radio.in_flight = Some(packet);
        self.count(STRICT_DEQUEUED, 1);
        self.count(MAC_PACKETS_FROM_NETWORK, 1);
        let p = self.s.params;
        let airtime = p.tx_time + self.rng.uniform(0.0, p.max_backoff);
        self.queue.schedule_in(airtime, node, Ev::TxEnd)?;
        Ok(())
    }

    fn on_tx_end(&mut self, tx: NodeId) -> Result<(), SimError> {
        // A released mote's pending transmission is abandoned.
        let Some(packet) = self.radios.get_mut(&tx).and_then(|r| r.in_flight.take()) else {
            return Ok(());
        };
        let frame = packet.body;
        if let Body::Discovery(req) = &frame.body {
            writeln!(self.log, "  tx discovery request={} from={tx} ttl={}", req.request_id, req.ttl).unwrap();
        }
        self.count(PHY_SIGNALS_TRANSMITTED, 1);
        if frame.dst.is_none() {
            self.count(MAC_BROADCAST_SENT, 1);
            self.count(DCF_BROADCAST_SENT, 1);
            if !self.satellites.is_empty() {
                self.count(SAT_FRAMES_RELAYED, 1);
            }
        }

        let graph = self.graph()?;
        let tx_spec = self.s.node(tx).expect("known node");
        let tx_pos = self.position(tx);
        let tx_profile = tx_spec.profile();
        let receivers: Vec<NodeId> = self
            .radios
            .keys()
            .copied()
            .filter(|&r| r != tx && self.mote_awake(r))
            .collect();
        for rx in receivers {
            let rx_spec = self.s.node(rx).expect("known node");
            let rx_profile = rx_spec.profile();
            let profile = link_profile(&tx_profile, &rx_profile);
            let distance = tx_pos.distance(self.position(rx));
            let outcome = packet_outcome(profile, received_power(profile, distance)?);
            match outcome {
                PacketOutcome::Lost => continue,
                PacketOutcome::Errored => {
                    self.count(PHY_SIGNALS_LOCKED, 1);
                    self.count(PHY_SIGNALS_WITH_ERRORS, 1);
                    continue;
                }
                PacketOutcome::Delivered => {
                    self.count(PHY_SIGNALS_LOCKED, 1);
                    self.count(PHY_SIGNALS_TO_MAC, 1);
                }
            }
            match frame.dst {
                None => {
                    self.count(MAC_BROADCAST_RECEIVED, 1);
                    self.count(DCF_BROADCAST_RECEIVED, 1);
                }
                Some(dst) if dst != rx => continue,
                Some(_) => {}
            }
            self.receive(rx, rx_spec.kind, &frame, &graph)?;
        }
        self.pump_radio(tx)
    }

    fn receive(&mut self, rx: NodeId, kind: NodeKind, frame: &Frame, graph: &CommGraph) -> Result<(), SimError> {
        match (&frame.body, kind) {
            (Body::Data, NodeKind::BaseStation) => {
                self.deliver_app_data(APP_IP_TTL);
                Ok(())
            }
            (Body::Dv(update), NodeKind::Mote) => self.on_dv_received(rx, update.clone(), graph),
            (Body::Discovery(req), NodeKind::Mote) => {
                self.count(IP_IN_RECEIVED, 1);
                self.on_discovery_at_mote(rx, req.clone(), graph)
            }
            (Body::Discovery(req), NodeKind::BaseStation) if frame.dst == Some(rx) => {
                self.count(IP_IN_RECEIVED, 1);
                self.count(IP_IN_DELIVERS, 1);
                self.on_discovery_at_bs(rx, req.clone())
            }
            _ => Ok(()),
        }
    }
}

/// True when `mote` ended the run asleep.
pub fn is_sleeping(report: &RunReport, mote: NodeId) -> bool {
    report.motes.get(&mote).is_some_and(|m| m.mode == MoteMode::Sleeping)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{paper_scenario, strip_wsn, NodeSpec};
    use crate::world::MobilityPath;

    fn static_scenario() -> Scenario {
        let mut s = paper_scenario();
        s.mobility.clear();
        s.duration = SimTime::from_secs(15.0);
        s
    }

    #[test]
    fn covered_station_never_discovers() {
        let mut s = static_scenario();
        s.nodes.retain(|n| n.kind != NodeKind::MobileStation || n.id == NodeId(2));
        s.nodes.iter_mut().find(|n| n.id == NodeId(2)).unwrap().position = Point::new(10.0, 10.0);
        let report = run(&s).unwrap();
        assert!(report.discoveries.is_empty());
        assert!(report.links.is_empty());
        assert!(report.ledger.get(UDP_TO_APP).unwrap() > 0);
    }

    #[test]
    fn stranded_station_without_motes_uses_satellite() {
        let mut s = strip_wsn(&static_scenario());
        s.nodes.iter_mut().find(|n| n.id == NodeId(2)).unwrap().position = Point::new(160.0, 40.0);
        let report = run(&s).unwrap();
        assert!(report.discoveries.is_empty());
        let link = report.links.iter().find(|l| l.ms_id == NodeId(2)).unwrap();
        assert_eq!(link.endpoint, LinkEndpoint::Satellite(NodeId(20)));
        assert!(link.relay_path.is_empty());
    }

    #[test]
    fn missing_satellite_is_an_error() {
        let mut s = strip_wsn(&static_scenario());
        s.nodes.retain(|n| n.kind != NodeKind::Satellite);
        s.nodes.iter_mut().find(|n| n.id == NodeId(2)).unwrap().position = Point::new(160.0, 40.0);
        assert_eq!(run(&s).unwrap_err(), SimError::Handoff(HandoffError::NoSatellite));
    }

    #[test]
    fn nearby_loss_is_steered_and_relays_sleep() {
        let mut s = static_scenario();
        s.nodes.retain(|n| n.kind != NodeKind::MobileStation);
        s.mobility.clear();
        s.nodes.push(NodeSpec::new(2, NodeKind::MobileStation, 100.0, 20.0));
        let report = run(&s).unwrap();
        let link = &report.links[0];
        assert_eq!(link.endpoint, LinkEndpoint::Bs(NodeId(0)));
        assert!(!link.relay_path.is_empty());
        for m in &link.relay_path {
            assert!(is_sleeping(&report, *m));
        }
        assert!(report.ledger.get(LINK_FRAMES_RECEIVED).unwrap() > 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut s = paper_scenario();
        s.duration = SimTime::from_secs(20.0);
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        assert_eq!(a.digest, b.digest);
        assert_eq!(a.ledger, b.ledger);
        s.seed = 2;
        assert_ne!(run(&s).unwrap().digest, a.digest);
    }

    #[test]
    fn moving_station_hands_over_between_cells() {
        let mut s = strip_wsn(&static_scenario());
        s.nodes.retain(|n| n.kind != NodeKind::MobileStation);
        s.nodes.push(NodeSpec::new(2, NodeKind::MobileStation, 0.0, 10.0));
        s.nodes[1].position = Point::new(120.0, 0.0);
        s.mobility.insert(
            NodeId(2),
            MobilityPath {
                waypoints: vec![Point::new(120.0, 10.0)],
                speed: 10.0,
                halt_fraction: 1.0,
            },
        );
        let report = run(&s).unwrap();
        assert!(report.links.is_empty());
        assert!(report.discoveries.is_empty());
    }
}
