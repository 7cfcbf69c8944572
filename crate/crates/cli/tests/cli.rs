use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use handoff_core::stats::{registry_keys, StatsLedger};

fn handoff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handoff")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_paper_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.txt");
    let o = handoff(&["run", "--scenario", "paper", "--seed", "7", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("phy80211.signals_transmitted="));
    assert!(text.lines().any(|l| l.starts_with("digest ")));
    assert!(String::from_utf8_lossy(&o.stdout).contains("signals_transmitted"));
}

#[test]
fn missing_scenario_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = handoff(&["run", "--scenario", path(&dir.path().join("nope.txt")), "--out", path(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
}

#[test]
fn malformed_scenario_exits_one_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.txt");
    fs::write(&scenario, "[params]\nseed = 1\nwarp = 3\n").unwrap();
    let o = handoff(&["run", "--scenario", path(&scenario), "--out", path(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3: unknown parameter warp"));
}

#[test]
fn unknown_flag_exits_two() {
    let o = handoff(&["run", "--scenario", "paper", "--out", "x", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(handoff(&["compare", "--epsilon", "1"]).status.code(), Some(2));
}

#[test]
fn identical_reports_compare_insignificant() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.txt");
    assert_eq!(handoff(&["run", "--scenario", "paper", "--until", "20", "--out", path(&report)]).status.code(), Some(0));
    let o = handoff(&["compare", "--baseline", path(&report), "--with-wsn", path(&report)]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("summary: desirable=0 undesirable=0 insignificant=28"));
    assert!(stdout.contains("NoSignificantChange"));
}

#[test]
fn engineered_reports_give_the_reported_figure() {
    let dir = tempfile::tempdir().unwrap();
    let keys: Vec<_> = registry_keys().collect();
    let base = StatsLedger::new();
    let mut with = StatsLedger::new();
    for &k in &keys[..15] {
        with.record(k, 2).unwrap();
    }
    let directions: String = keys[..15]
        .iter()
        .enumerate()
        .map(|(i, k)| format!("{k}={}\n", if i < 11 { "good" } else { "bad" }))
        .collect();
    let (b, w, d) = (dir.path().join("b"), dir.path().join("w"), dir.path().join("d"));
    fs::write(&b, base.to_text()).unwrap();
    fs::write(&w, with.to_text()).unwrap();
    fs::write(&d, directions).unwrap();
    let out = dir.path().join("cmp.txt");
    let o = handoff(&["compare", "--baseline", path(&b), "--with-wsn", path(&w), "--directions", path(&d), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("summary: desirable=11 undesirable=4 insignificant=13"));
    assert!(text.ends_with("QoS improvement: 73.33%\n"));
}

#[test]
fn mismatched_registry_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (b, w) = (dir.path().join("b"), dir.path().join("w"));
    fs::write(&b, StatsLedger::new().to_text()).unwrap();
    fs::write(&w, "phy80211.signals_transmitted=1\n").unwrap();
    let o = handoff(&["compare", "--baseline", path(&b), "--with-wsn", path(&w)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("registry mismatch"));
}

#[test]
fn auto_baseline_shows_motes_adding_traffic() {
    let o = handoff(&["compare", "--scenario", "paper", "--auto-baseline"]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for key in ["phy80211.signals_transmitted", "mac80211.broadcast_sent", "mac_satcom.frames_relayed", "app_bellman_ford.triggered_updates"] {
        assert!(stdout.contains(&format!("{key}: Desirable (+")), "{key}");
    }
    assert!(stdout.contains("QoS improvement: "));
}

#[test]
fn repeated_runs_write_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(handoff(&["run", "--scenario", "paper", "--seed", "3", "--out", path(out)]).status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn scenario_command_prints_golden_file() {
    let o = handoff(&["scenario"]);
    let golden = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/paper.txt")).unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout), golden);
}
