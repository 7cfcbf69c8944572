//! Report files: the ledger, link records, mote energy and the digest.

use std::fmt::Write as _;

use crate::handoff::{LinkEndpoint, MoteMode};
use crate::node::NodeId;
use crate::sim::RunReport;
use crate::stats::{StatsError, StatsLedger};

fn endpoint_token(e: LinkEndpoint) -> String {
    match e {
        LinkEndpoint::Bs(id) => format!("bs:{id}"),
        LinkEndpoint::Satellite(id) => format!("sat:{id}"),
    }
}

fn path_token(path: &[NodeId]) -> String {
    if path.is_empty() {
        "-".to_string()
    } else {
        path.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Machine-readable report: `layer.name=value` lines in registry order,
/// then `link`, `energy` and `digest` lines.
pub fn report_text(r: &RunReport) -> String {
    let mut out = r.ledger.to_text();
    for (i, link) in r.links.iter().enumerate() {
        let dv = r.dv_paths.get(i).map_or(&[][..], Vec::as_slice);
        writeln!(
            out,
            "link {} {} {:.6} {} dv={}",
            link.ms_id,
            endpoint_token(link.endpoint),
            link.established_at.as_secs(),
            path_token(&link.relay_path),
            path_token(dv)
        )
        .unwrap();
    }
    for (mote, state) in &r.motes {
        let mode = match state.mode {
            MoteMode::Active => "Active",
            MoteMode::Sleeping => "Sleeping",
        };
        writeln!(out, "energy {mote} {} {mode}", state.energy_consumed).unwrap();
    }
    writeln!(out, "digest {}", r.digest).unwrap();
    out
}

/// Human-readable summary, every line prefixed with `# ` so it can trail a
/// machine-readable report.
pub fn human_table(r: &RunReport) -> String {
    let mut out = String::new();
    writeln!(out, "# {:<18} {:<30} {:>10}", "layer", "counter", "value").unwrap();
    for (key, value) in r.ledger.iter() {
        writeln!(out, "# {:<18} {:<30} {:>10}", key.layer.token(), key.name, value).unwrap();
    }
    writeln!(out, "# links established: {}", r.links.len()).unwrap();
    for link in &r.links {
        writeln!(
            out,
            "#   ms {} -> {} at {:.3}s via {} mote(s)",
            link.ms_id,
            endpoint_token(link.endpoint),
            link.established_at.as_secs(),
            link.relay_path.len()
        )
        .unwrap();
    }
    let asleep = r.motes.values().filter(|m| m.mode == MoteMode::Sleeping).count();
    writeln!(out, "# motes asleep: {asleep}/{}", r.motes.len()).unwrap();
    writeln!(out, "# events dispatched: {}", r.events).unwrap();
    out
}

/// Extracts the counter ledger from a report file.
pub fn parse_report_ledger(text: &str) -> Result<StatsLedger, StatsError> {
    let counters: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .filter(|l| {
            let first = l.split_whitespace().next().unwrap_or("");
            !matches!(first, "link" | "energy" | "digest")
        })
        .map(|l| format!("{l}\n"))
        .collect();
    StatsLedger::from_text(&counters)
}

/// The digest recorded in a report file, if any.
pub fn parse_report_digest(text: &str) -> Option<&str> {
    text.lines().find_map(|l| l.strip_prefix("digest "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimTime;
    use crate::handoff::{LinkRecord, MoteState};
    use crate::node::NodeId;
    use std::collections::BTreeMap;

    fn sample() -> RunReport {
        let mut ledger = StatsLedger::new();
        ledger.record(crate::stats::counters::SAT_FRAMES_RELAYED, 4).unwrap();
        RunReport {
            ledger,
            links: vec![LinkRecord {
                ms_id: NodeId(2),
                endpoint: LinkEndpoint::Satellite(NodeId(20)),
                established_at: SimTime::from_secs(12.5),
                relay_path: vec![NodeId(5), NodeId(9)],
            }],
            dv_paths: vec![vec![NodeId(5), NodeId(9)]],
            decisions: Vec::new(),
            discoveries: Vec::new(),
            motes: BTreeMap::from([(
                NodeId(5),
                MoteState {
                    mode: MoteMode::Sleeping,
                    energy_consumed: 3,
                    ..MoteState::default()
                },
            )]),
            releases: Vec::new(),
            events: 0,
            dispatch_log: String::new(),
            digest: "ab12".into(),
        }
    }

    #[test]
    fn report_layout() {
        let text = report_text(&sample());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[14], "mac_satcom.frames_relayed=4");
        assert_eq!(lines[28], "link 2 sat:20 12.500000 5,9 dv=5,9");
        assert_eq!(lines[29], "energy 5 3 Sleeping");
        assert_eq!(lines[30], "digest ab12");
    }

    #[test]
    fn ledger_survives_report_and_table() {
        let r = sample();
        let text = format!("{}{}", report_text(&r), human_table(&r));
        assert_eq!(parse_report_ledger(&text).unwrap(), r.ledger);
        assert_eq!(parse_report_digest(&text), Some("ab12"));
    }
}
