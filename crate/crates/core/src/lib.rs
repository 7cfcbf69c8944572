//! Discrete-event simulator of mote-assisted cellular handoff.
//!
//! A mobile station that drops out of base-station coverage asks nearby
//! sensor motes for help; the motes flood its position towards a base
//! station, the MSC either steers a base station's antenna array at it or
//! falls back to the satellite, and the relaying motes then go to sleep.
//! Runs record per-layer counters that can be compared with and without the
//! motes.

pub mod engine;
pub mod handoff;
pub mod node;
pub mod queues;
pub mod report;
pub mod routing;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod world;

pub use engine::{Event, EventQueue, RngStream, SimTime};
pub use handoff::{DiscoveryRequest, LinkEndpoint, LinkRecord, MoteMode, MoteState, MscDecision};
pub use node::{NodeId, NodeKind};
pub use report::{human_table, parse_report_ledger, report_text};
pub use routing::{DistanceVector, INFINITY};
pub use scenario::{load_scenario, paper_scenario, strip_wsn, Scenario, ScenarioError};
pub use sim::{run, RunReport, SimError};
pub use stats::{classify, qos_improvement, render_report, Classification, DirectionMap, StatsLedger};
pub use world::{CommGraph, Point, RadioProfile};
