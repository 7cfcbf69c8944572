//! Scenario description, its text format, and the built-in paper scene.
//!
//! ```text
//! # comment
//! [params]
//! seed = 1
//! duration = 60
//! [node]
//! # id kind x y [override=value ...]
//! 0 bs 0 0
//! 4 mote 64 -60 tx_power=2
//! [mobility]
//! # id speed halt_fraction x,y [x,y ...]
//! 2 5 0.5 320,40
//! ```
//!
//! Every `[params]` key is optional and defaults to [`ProtocolParams`].
//! Profile overrides are `tx_power`, `sensitivity`, `error_margin`,
//! `path_loss_exponent` and `reference_loss`; unset fields come from the
//! kind's default profile.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::SimTime;
use crate::handoff::{LinkDelays, DEFAULT_TTL};
use crate::node::{NodeId, NodeKind};
use crate::queues::DEFAULT_CAPACITY;
use crate::world::{CommGraph, MobilityPath, Point, RadioNode, RadioProfile, WorldError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

fn parse_err(line: usize, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        reason: reason.into(),
    }
}

/// Partial radio profile; `None` keeps the kind's default.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProfileOverride {
    pub tx_power: Option<f64>,
    pub sensitivity: Option<f64>,
    pub error_margin: Option<f64>,
    pub path_loss_exponent: Option<f64>,
    pub reference_loss: Option<f64>,
}

impl ProfileOverride {
    const KEYS: [&'static str; 5] = [
        "tx_power",
        "sensitivity",
        "error_margin",
        "path_loss_exponent",
        "reference_loss",
    ];

    fn slot(&mut self, key: &str) -> Option<&mut Option<f64>> {
        Some(match key {
            "tx_power" => &mut self.tx_power,
            "sensitivity" => &mut self.sensitivity,
            "error_margin" => &mut self.error_margin,
            "path_loss_exponent" => &mut self.path_loss_exponent,
            "reference_loss" => &mut self.reference_loss,
            _ => return None,
        })
    }

    fn values(&self) -> [Option<f64>; 5] {
        [
            self.tx_power,
            self.sensitivity,
            self.error_margin,
            self.path_loss_exponent,
            self.reference_loss,
        ]
    }

    pub fn apply(&self, base: RadioProfile) -> RadioProfile {
        RadioProfile {
            tx_power: self.tx_power.unwrap_or(base.tx_power),
            sensitivity: self.sensitivity.unwrap_or(base.sensitivity),
            error_margin: self.error_margin.unwrap_or(base.error_margin),
            path_loss_exponent: self.path_loss_exponent.unwrap_or(base.path_loss_exponent),
            reference_loss: self.reference_loss.unwrap_or(base.reference_loss),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
    pub position: Point,
    pub overrides: ProfileOverride,
}

impl NodeSpec {
    pub fn new(id: u32, kind: NodeKind, x: f64, y: f64) -> Self {
        NodeSpec {
            id: NodeId(id),
            kind,
            position: Point::new(x, y),
            overrides: ProfileOverride::default(),
        }
    }

    pub fn profile(&self) -> RadioProfile {
        self.overrides.apply(RadioProfile::default_for(self.kind))
    }
}

/// Timers, delays and limits of the protocol stack. Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub default_ttl: u32,
    pub coverage_check_interval: f64,
    pub app_interval: f64,
    pub dv_period: f64,
    pub queue_capacity: usize,
    pub tx_time: f64,
    pub max_backoff: f64,
    pub backhaul_delay: f64,
    pub steering_delay: f64,
    pub satellite_acquisition_delay: f64,
    pub satellite_search_delay: f64,
    pub satellite_hop_delay: f64,
    pub discovery_timeout: f64,
    pub max_steer_range: f64,
    /// Classification threshold used by `compare`.
    pub epsilon: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        let delays = LinkDelays::default();
        ProtocolParams {
            default_ttl: DEFAULT_TTL,
            coverage_check_interval: 0.5,
            app_interval: 1.0,
            dv_period: 10.0,
            queue_capacity: DEFAULT_CAPACITY,
            tx_time: 0.002,
            max_backoff: 0.001,
            backhaul_delay: 0.05,
            steering_delay: delays.steering,
            satellite_acquisition_delay: delays.satellite_acquisition,
            satellite_search_delay: delays.satellite_search,
            satellite_hop_delay: 0.125,
            discovery_timeout: 3.0,
            max_steer_range: 1.5 * RadioProfile::BASE_STATION.range(),
            epsilon: 0,
        }
    }
}

impl ProtocolParams {
    pub fn link_delays(&self) -> LinkDelays {
        LinkDelays {
            steering: self.steering_delay,
            satellite_acquisition: self.satellite_acquisition_delay,
            satellite_search: self.satellite_search_delay,
        }
    }

    fn float_fields(&mut self) -> [(&'static str, &mut f64); 12] {
        [
            ("coverage_check_interval", &mut self.coverage_check_interval),
            ("app_interval", &mut self.app_interval),
            ("dv_period", &mut self.dv_period),
            ("tx_time", &mut self.tx_time),
            ("max_backoff", &mut self.max_backoff),
            ("backhaul_delay", &mut self.backhaul_delay),
            ("steering_delay", &mut self.steering_delay),
            ("satellite_acquisition_delay", &mut self.satellite_acquisition_delay),
            ("satellite_search_delay", &mut self.satellite_search_delay),
            ("satellite_hop_delay", &mut self.satellite_hop_delay),
            ("discovery_timeout", &mut self.discovery_timeout),
            ("max_steer_range", &mut self.max_steer_range),
        ]
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |what: &str| Err(ScenarioError::Validation(format!("parameter {what} out of range")));
        let mut copy = *self;
        for (name, value) in copy.float_fields() {
            let positive_required = matches!(
                name,
                "coverage_check_interval" | "app_interval" | "dv_period" | "tx_time" | "satellite_hop_delay"
            );
            if !value.is_finite() || *value < 0.0 || (positive_required && *value == 0.0) {
                return bad(name);
            }
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub duration: SimTime,
    pub params: ProtocolParams,
    pub nodes: Vec<NodeSpec>,
    pub mobility: BTreeMap<NodeId, MobilityPath>,
}

impl Scenario {
    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn ids_of(&self, kind: NodeKind) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.nodes.iter().filter(|n| n.kind == kind).map(|n| n.id).collect();
        ids.sort();
        ids
    }

    pub fn census(&self) -> BTreeMap<NodeKind, usize> {
        let mut census = BTreeMap::new();
        for n in &self.nodes {
            *census.entry(n.kind).or_insert(0) += 1;
        }
        census
    }

    /// Where `node` is at time `t`; nodes without a mobility path never move.
    pub fn position_at(&self, node: &NodeSpec, t: SimTime) -> Point {
        match self.mobility.get(&node.id) {
            Some(path) => path.position_at(node.position, t),
            None => node.position,
        }
    }

    /// Connectivity at time `t`, leaving out the nodes in `absent`.
    pub fn graph_at(&self, t: SimTime, absent: &BTreeSet<NodeId>) -> Result<CommGraph, WorldError> {
        let radios: Vec<RadioNode> = self
            .nodes
            .iter()
            .filter(|n| !absent.contains(&n.id))
            .map(|n| RadioNode {
                id: n.id,
                kind: n.kind,
                position: self.position_at(n, t),
                profile: n.profile(),
            })
            .collect();
        CommGraph::build(&radios)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Validation(msg));
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return invalid(format!("duplicate node id {}", n.id));
            }
            if !n.position.x.is_finite() || !n.position.y.is_finite() {
                return invalid(format!("node {} has a non-finite position", n.id));
            }
            if n.kind.is_terrestrial_radio() {
                n.profile()
                    .validate()
                    .map_err(|e| ScenarioError::Validation(format!("node {}: {e}", n.id)))?;
            }
        }
        if self.census().get(&NodeKind::Msc).copied().unwrap_or(0) > 1 {
            return invalid("more than one msc".into());
        }
        for (id, path) in &self.mobility {
            match self.node(*id) {
                Some(n) if n.kind == NodeKind::MobileStation => {}
                Some(_) => return invalid(format!("mobility given for non-mobile node {id}")),
                None => return invalid(format!("mobility given for unknown node {id}")),
            }
            path.validate()
                .map_err(|e| ScenarioError::Validation(format!("mobility of {id}: {e}")))?;
        }
        if !self.duration.as_secs().is_finite() {
            return invalid("duration must be finite".into());
        }
        self.params.validate()
    }

    /// Canonical text form; [`load_scenario`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = self.params;
        out.push_str("[params]\n");
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "duration = {}", self.duration.as_secs()).unwrap();
        writeln!(out, "default_ttl = {}", p.default_ttl).unwrap();
        writeln!(out, "queue_capacity = {}", p.queue_capacity).unwrap();
        writeln!(out, "epsilon = {}", p.epsilon).unwrap();
        let mut p = p;
        for (name, value) in p.float_fields() {
            writeln!(out, "{name} = {value}").unwrap();
        }
        out.push_str("\n[node]\n");
        for n in &self.nodes {
            write!(out, "{} {} {} {}", n.id, n.kind, n.position.x, n.position.y).unwrap();
            for (key, value) in ProfileOverride::KEYS.iter().zip(n.overrides.values()) {
                if let Some(v) = value {
                    write!(out, " {key}={v}").unwrap();
                }
            }
            out.push('\n');
        }
        out.push_str("\n[mobility]\n");
        for (id, path) in &self.mobility {
            write!(out, "{id} {} {}", path.speed, path.halt_fraction).unwrap();
            for w in &path.waypoints {
                write!(out, " {},{}", w.x, w.y).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T, ScenarioError> {
    s.parse().map_err(|_| parse_err(line, format!("bad {what} {s:?}")))
}

fn parse_point(line: usize, s: &str) -> Result<Point, ScenarioError> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| parse_err(line, format!("expected x,y but found {s:?}")))?;
    Ok(Point::new(parse_num(line, "x", x)?, parse_num(line, "y", y)?))
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Params,
    Node,
    Mobility,
}

/// Parses and validates a scenario.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut scenario = Scenario {
        seed: 1,
        duration: SimTime::from_secs(60.0),
        params: ProtocolParams::default(),
        nodes: Vec::new(),
        mobility: BTreeMap::new(),
    };
    let mut section = Section::None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[params]" => Section::Params,
                "[node]" => Section::Node,
                "[mobility]" => Section::Mobility,
                _ => return Err(parse_err(n, format!("unknown section {line}"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(parse_err(n, "content before any section")),
            Section::Params => parse_param(n, line, &mut scenario)?,
            Section::Node => scenario.nodes.push(parse_node(n, line)?),
            Section::Mobility => {
                let (id, path) = parse_mobility(n, line)?;
                if scenario.mobility.insert(id, path).is_some() {
                    return Err(ScenarioError::Validation(format!("mobility for {id} given twice")));
                }
            }
        }
    }
    scenario.validate()?;
    Ok(scenario)
}

fn parse_param(n: usize, line: &str, s: &mut Scenario) -> Result<(), ScenarioError> {
    let (key, value) = line
        .split_once('=')
        .ok_or_else(|| parse_err(n, "expected key = value"))?;
    let (key, value) = (key.trim(), value.trim());
    match key {
        "seed" => s.seed = parse_num(n, key, value)?,
        "duration" => {
            let secs: f64 = parse_num(n, key, value)?;
            s.duration = SimTime::try_from_secs(secs).map_err(|e| parse_err(n, e.to_string()))?;
        }
        "default_ttl" => s.params.default_ttl = parse_num(n, key, value)?,
        "queue_capacity" => s.params.queue_capacity = parse_num(n, key, value)?,
        "epsilon" => s.params.epsilon = parse_num(n, key, value)?,
        _ => {
            let parsed: f64 = parse_num(n, key, value)?;
            let mut fields = s.params.float_fields();
            let slot = fields
                .iter_mut()
                .find(|(name, _)| *name == key)
                .ok_or_else(|| parse_err(n, format!("unknown parameter {key}")))?;
            *slot.1 = parsed;
        }
    }
    Ok(())
}

fn parse_node(n: usize, line: &str) -> Result<NodeSpec, ScenarioError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 4 {
        return Err(parse_err(n, "node line needs: id kind x y"));
    }
    let kind = NodeKind::from_token(fields[1]).ok_or_else(|| parse_err(n, format!("unknown kind {}", fields[1])))?;
    let mut spec = NodeSpec {
        id: parse_num(n, "node id", fields[0])?,
        kind,
        position: Point::new(parse_num(n, "x", fields[2])?, parse_num(n, "y", fields[3])?),
        overrides: ProfileOverride::default(),
    };
    for field in &fields[4..] {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(n, format!("expected override key=value, found {field}")))?;
        let value: f64 = parse_num(n, key, value)?;
        let slot = spec
            .overrides
            .slot(key)
            .ok_or_else(|| parse_err(n, format!("unknown profile field {key}")))?;
        if slot.replace(value).is_some() {
            return Err(parse_err(n, format!("{key} given twice")));
        }
    }
    Ok(spec)
}

fn parse_mobility(n: usize, line: &str) -> Result<(NodeId, MobilityPath), ScenarioError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 4 {
        return Err(parse_err(n, "mobility line needs: id speed halt_fraction x,y [x,y ...]"));
    }
    let path = MobilityPath {
        speed: parse_num(n, "speed", fields[1])?,
        halt_fraction: parse_num(n, "halt_fraction", fields[2])?,
        waypoints: fields[3..].iter().map(|f| parse_point(n, f)).collect::<Result<_, _>>()?,
    };
    Ok((parse_num(n, "node id", fields[0])?, path))
}

pub const PAPER_BS_SPACING: f64 = 320.0;

/// The built-in scene: two base stations, two mobile stations, a 4x4 mote
/// grid between them, one satellite and the MSC.
///
/// Ids: base stations 0 and 1, mobile stations 2 and 3, motes 4..=19 row by
/// row, satellite 20, MSC 21. Each mobile station leaves from beside its own
/// base station towards the other one and halts half way, out of both
/// base stations' coverage and steering range. The two lanes sit 40 m either
/// side of the axis so the stations never pass over a mote or each other.
pub fn paper_scenario() -> Scenario {
    let span = PAPER_BS_SPACING;
    let mut nodes = vec![
        NodeSpec::new(0, NodeKind::BaseStation, 0.0, 0.0),
        NodeSpec::new(1, NodeKind::BaseStation, span, 0.0),
        NodeSpec::new(2, NodeKind::MobileStation, 0.0, 40.0),
        NodeSpec::new(3, NodeKind::MobileStation, span, -40.0),
    ];
    let mut id = 4;
    for y in [-60.0, -20.0, 20.0, 60.0] {
        for col in 1..=4 {
            nodes.push(NodeSpec::new(id, NodeKind::Mote, span * col as f64 / 5.0, y));
            id += 1;
        }
    }
    nodes.push(NodeSpec::new(20, NodeKind::Satellite, span / 2.0, 0.0));
    nodes.push(NodeSpec::new(21, NodeKind::Msc, span / 2.0, 0.0));

    let lane = |y: f64, to_x: f64| MobilityPath {
        waypoints: vec![Point::new(to_x, y)],
        speed: 5.0,
        halt_fraction: 0.5,
    };
    let mobility = BTreeMap::from([(NodeId(2), lane(40.0, span)), (NodeId(3), lane(-40.0, 0.0))]);
    Scenario {
        seed: 1,
        duration: SimTime::from_secs(60.0),
        params: ProtocolParams::default(),
        nodes,
        mobility,
    }
}

/// The same scenario with every mote removed.
pub fn strip_wsn(s: &Scenario) -> Scenario {
    Scenario {
        nodes: s.nodes.iter().filter(|n| n.kind != NodeKind::Mote).cloned().collect(),
        ..s.clone()
    }
}
