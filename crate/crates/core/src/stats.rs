//! Per-layer counter ledger, with/without comparison, and the QoS figure.
//!
//! The registry is closed: 28 counters grouped by protocol layer. Each
//! counter carries a default direction saying whether an increase is good,
//! bad or neutral for service quality. Comparing two ledgers classifies every
//! counter as desirable, undesirable or insignificant, and the QoS
//! improvement is the desirable share of the significant changes,
//! `100 * d / (d + u)`.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("unknown counter {0}")]
    UnknownCounter(String),
    #[error("counter registry mismatch: {0}")]
    RegistryMismatch(String),
    #[error("no significant change between the two runs")]
    NoSignificantChange,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Phy80211,
    Mac80211,
    MacDcf,
    MacLink,
    MacSatCom,
    NetIp,
    NetStrictPrior,
    NetFifo,
    TransportUdp,
    AppBellmanFord,
}

impl Layer {
    pub fn token(self) -> &'static str {
        match self {
            Layer::Phy80211 => "phy80211",
            Layer::Mac80211 => "mac80211",
            Layer::MacDcf => "mac_dcf",
            Layer::MacLink => "mac_link",
            Layer::MacSatCom => "mac_satcom",
            Layer::NetIp => "net_ip",
            Layer::NetStrictPrior => "net_strict_prior",
            Layer::NetFifo => "net_fifo",
            Layer::TransportUdp => "transport_udp",
            Layer::AppBellmanFord => "app_bellman_ford",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CounterKey {
    pub layer: Layer,
    pub name: &'static str,
}

impl CounterKey {
    pub const fn new(layer: Layer, name: &'static str) -> Self {
        CounterKey { layer, name }
    }

    /// Position in [`REGISTRY`], if registered.
    pub fn index(&self) -> Option<usize> {
        REGISTRY.iter().position(|(k, _)| k == self)
    }

    /// Looks up a registered key from its `layer.name` form.
    pub fn parse(text: &str) -> Option<CounterKey> {
        REGISTRY.iter().map(|(k, _)| *k).find(|k| k.to_string() == text)
    }
}

impl fmt::Display for CounterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.layer.token(), self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    GoodIncreasing,
    BadIncreasing,
    Neutral,
}

impl Direction {
    pub fn token(self) -> &'static str {
        match self {
            Direction::GoodIncreasing => "good",
            Direction::BadIncreasing => "bad",
            Direction::Neutral => "neutral",
        }
    }

    pub fn from_token(s: &str) -> Option<Direction> {
        [Direction::GoodIncreasing, Direction::BadIncreasing, Direction::Neutral]
            .into_iter()
            .find(|d| d.token() == s)
    }
}

pub mod counters {
    use super::{CounterKey, Layer::*};

    pub const PHY_SIGNALS_TRANSMITTED: CounterKey = CounterKey::new(Phy80211, "signals_transmitted");
    pub const PHY_SIGNALS_TO_MAC: CounterKey = CounterKey::new(Phy80211, "signals_received_to_mac");
    pub const PHY_SIGNALS_LOCKED: CounterKey = CounterKey::new(Phy80211, "signals_locked");
    pub const PHY_SIGNALS_WITH_ERRORS: CounterKey = CounterKey::new(Phy80211, "signals_received_with_errors");

    pub const MAC_PACKETS_FROM_NETWORK: CounterKey = CounterKey::new(Mac80211, "packets_from_network");
    pub const MAC_BROADCAST_SENT: CounterKey = CounterKey::new(Mac80211, "broadcast_sent");
    pub const MAC_BROADCAST_RECEIVED: CounterKey = CounterKey::new(Mac80211, "broadcast_received_clearly");

    pub const DCF_BROADCAST_SENT: CounterKey = CounterKey::new(MacDcf, "broadcast_signals_sent");
    pub const DCF_BROADCAST_RECEIVED: CounterKey = CounterKey::new(MacDcf, "broadcast_signals_received");

    pub const LINK_FRAMES_SENT: CounterKey = CounterKey::new(MacLink, "frames_sent");
    pub const LINK_FRAMES_RECEIVED: CounterKey = CounterKey::new(MacLink, "frames_received");
    /// Accumulated busy airtime in milliseconds.
    pub const LINK_UTILIZATION: CounterKey = CounterKey::new(MacLink, "link_utilization");

    pub const SAT_FRAMES_SENT: CounterKey = CounterKey::new(MacSatCom, "frames_sent");
    pub const SAT_FRAMES_RECEIVED: CounterKey = CounterKey::new(MacSatCom, "frames_received");
    pub const SAT_FRAMES_RELAYED: CounterKey = CounterKey::new(MacSatCom, "frames_relayed");

    pub const IP_IN_RECEIVED: CounterKey = CounterKey::new(NetIp, "in_received");
    pub const IP_IN_DELIVERS: CounterKey = CounterKey::new(NetIp, "in_delivers");
    pub const IP_OUT_REQUESTS: CounterKey = CounterKey::new(NetIp, "out_requests");
    pub const IP_IN_DELIVERS_TTL_SUM: CounterKey = CounterKey::new(NetIp, "in_delivers_ttl_sum");

    pub const STRICT_QUEUED: CounterKey = CounterKey::new(NetStrictPrior, "packets_queued");
    pub const STRICT_DEQUEUED: CounterKey = CounterKey::new(NetStrictPrior, "packets_dequeued");

    pub const FIFO_QUEUED: CounterKey = CounterKey::new(NetFifo, "packets_queued");
    pub const FIFO_DEQUEUED: CounterKey = CounterKey::new(NetFifo, "packets_dequeued");
    pub const FIFO_PEAK_SIZE: CounterKey = CounterKey::new(NetFifo, "peak_queue_size");

    pub const UDP_FROM_APP: CounterKey = CounterKey::new(TransportUdp, "packets_from_app");
    pub const UDP_TO_APP: CounterKey = CounterKey::new(TransportUdp, "packets_to_app");

    pub const BF_TRIGGERED_UPDATES: CounterKey = CounterKey::new(AppBellmanFord, "triggered_updates");
    pub const BF_UPDATES_RECEIVED: CounterKey = CounterKey::new(AppBellmanFord, "update_packets_received");
}

use counters::*;
use Direction::{BadIncreasing as Bad, GoodIncreasing as Good};

pub const REGISTRY_LEN: usize = 28;

/// Every counter in report order, with its default direction. Unannotated
/// counters count as good when they rise; queue occupancy and error
/// counters count as bad.
pub const REGISTRY: [(CounterKey, Direction); REGISTRY_LEN] = [
    (PHY_SIGNALS_TRANSMITTED, Good),
    (PHY_SIGNALS_TO_MAC, Good),
    (PHY_SIGNALS_LOCKED, Good),
    (PHY_SIGNALS_WITH_ERRORS, Bad),
    (MAC_PACKETS_FROM_NETWORK, Good),
    (MAC_BROADCAST_SENT, Good),
    (MAC_BROADCAST_RECEIVED, Good),
    (DCF_BROADCAST_SENT, Good),
    (DCF_BROADCAST_RECEIVED, Good),
    (LINK_FRAMES_SENT, Good),
    (LINK_FRAMES_RECEIVED, Good),
    (LINK_UTILIZATION, Good),
    (SAT_FRAMES_SENT, Good),
    (SAT_FRAMES_RECEIVED, Good),
    (SAT_FRAMES_RELAYED, Good),
    (IP_IN_RECEIVED, Good),
    (IP_IN_DELIVERS, Good),
    (IP_OUT_REQUESTS, Good),
    (IP_IN_DELIVERS_TTL_SUM, Good),
    (STRICT_QUEUED, Bad),
    (STRICT_DEQUEUED, Good),
    (FIFO_QUEUED, Bad),
    (FIFO_DEQUEUED, Good),
    (FIFO_PEAK_SIZE, Bad),
    (UDP_FROM_APP, Good),
    (UDP_TO_APP, Good),
    (BF_TRIGGERED_UPDATES, Good),
    (BF_UPDATES_RECEIVED, Good),
];

pub fn registry_keys() -> impl Iterator<Item = CounterKey> {
    REGISTRY.iter().map(|(k, _)| *k)
}

fn index_of(key: CounterKey) -> Result<usize, StatsError> {
    key.index().ok_or_else(|| StatsError::UnknownCounter(key.to_string()))
}

/// One value per registered counter. Values only ever grow.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StatsLedger {
    values: [u64; REGISTRY_LEN],
}

impl Default for StatsLedger {
    fn default() -> Self {
        StatsLedger {
            values: [0; REGISTRY_LEN],
        }
    }
}

impl StatsLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, key: CounterKey, delta: u64) -> Result<(), StatsError> {
        let i = index_of(key)?;
        self.values[i] += delta;
        Ok(())
    }

    /// Raises a high-water-mark counter to `value` if it is larger.
    pub fn raise_to(&mut self, key: CounterKey, value: u64) -> Result<(), StatsError> {
        let i = index_of(key)?;
        self.values[i] = self.values[i].max(value);
        Ok(())
    }

    pub fn get(&self, key: CounterKey) -> Result<u64, StatsError> {
        Ok(self.values[index_of(key)?])
    }

    pub fn iter(&self) -> impl Iterator<Item = (CounterKey, u64)> + '_ {
        registry_keys().zip(self.values.iter().copied())
    }

    /// `layer.name=value`, one line per counter, registry order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.iter() {
            writeln!(out, "{k}={v}").unwrap();
        }
        out
    }

    /// Reads the `layer.name=value` lines of a report. Lines that are not
    /// counter assignments are skipped. Every registered counter must appear
    /// exactly once.
    pub fn from_text(text: &str) -> Result<StatsLedger, StatsError> {
        let mut ledger = StatsLedger::default();
        let mut seen = [false; REGISTRY_LEN];
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let Some((name, value)) = line.split_once('=') else {
                continue;
            };
            let key = CounterKey::parse(name.trim())
                .ok_or_else(|| StatsError::RegistryMismatch(format!("unregistered counter {}", name.trim())))?;
            let value: u64 = value.trim().parse().map_err(|_| StatsError::Parse {
                line: n + 1,
                reason: format!("bad counter value {:?}", value.trim()),
            })?;
            let i = index_of(key)?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(StatsError::RegistryMismatch(format!("duplicate counter {key}")));
            }
            ledger.values[i] = value;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(StatsError::RegistryMismatch(format!("missing counter {}", REGISTRY[i].0)));
        }
        Ok(ledger)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionMap {
    directions: [Direction; REGISTRY_LEN],
}

impl Default for DirectionMap {
    fn default() -> Self {
        DirectionMap {
            directions: REGISTRY.map(|(_, d)| d),
        }
    }
}

impl DirectionMap {
    pub fn get(&self, key: CounterKey) -> Result<Direction, StatsError> {
        Ok(self.directions[index_of(key)?])
    }

    pub fn set(&mut self, key: CounterKey, dir: Direction) -> Result<(), StatsError> {
        self.directions[index_of(key)?] = dir;
        Ok(())
    }

    /// Applies `layer.name=good|bad|neutral` overrides on top of the defaults.
    /// Blank lines and `#` comments are ignored.
    pub fn with_overrides(mut self, text: &str) -> Result<DirectionMap, StatsError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| StatsError::Parse { line: n + 1, reason };
            let (name, dir) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected layer.name=direction".into()))?;
            let key = CounterKey::parse(name.trim())
                .ok_or_else(|| StatsError::UnknownCounter(name.trim().to_string()))?;
            let dir = Direction::from_token(dir.trim())
                .ok_or_else(|| parse_err(format!("unknown direction {:?}", dir.trim())))?;
            self.set(key, dir)?;
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Desirable,
    Undesirable,
    Insignificant,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Desirable => "Desirable",
            Verdict::Undesirable => "Undesirable",
            Verdict::Insignificant => "Insignificant",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Summary {
    pub desirable: usize,
    pub undesirable: usize,
    pub insignificant: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    verdicts: [Verdict; REGISTRY_LEN],
    deltas: [i128; REGISTRY_LEN],
}

impl Classification {
    pub fn verdict(&self, key: CounterKey) -> Result<Verdict, StatsError> {
        Ok(self.verdicts[index_of(key)?])
    }

    pub fn delta(&self, key: CounterKey) -> Result<i128, StatsError> {
        Ok(self.deltas[index_of(key)?])
    }

    pub fn iter(&self) -> impl Iterator<Item = (CounterKey, Verdict, i128)> + '_ {
        registry_keys()
            .zip(self.verdicts.iter().copied())
            .zip(self.deltas.iter().copied())
            .map(|((k, v), d)| (k, v, d))
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::default();
        for v in self.verdicts {
            match v {
                Verdict::Desirable => s.desirable += 1,
                Verdict::Undesirable => s.undesirable += 1,
                Verdict::Insignificant => s.insignificant += 1,
            }
        }
        s
    }
}

/// Classifies `with_wsn - baseline` per counter. Changes of at most
/// `epsilon` in magnitude, and any change on a neutral counter, are
/// insignificant.
pub fn classify(
    baseline: &StatsLedger,
    with_wsn: &StatsLedger,
    dirs: &DirectionMap,
    epsilon: u64,
) -> Classification {
    let mut verdicts = [Verdict::Insignificant; REGISTRY_LEN];
    let mut deltas = [0i128; REGISTRY_LEN];
    for i in 0..REGISTRY_LEN {
        let delta = with_wsn.values[i] as i128 - baseline.values[i] as i128;
        deltas[i] = delta;
        if delta.unsigned_abs() <= epsilon as u128 {
            continue;
        }
        verdicts[i] = match (dirs.directions[i], delta > 0) {
            (Direction::Neutral, _) => Verdict::Insignificant,
            (Direction::GoodIncreasing, true) | (Direction::BadIncreasing, false) => Verdict::Desirable,
            (Direction::GoodIncreasing, false) | (Direction::BadIncreasing, true) => Verdict::Undesirable,
        };
    }
    Classification { verdicts, deltas }
}

/// Percentage of significant changes that were desirable.
pub fn qos_from_counts(desirable: usize, undesirable: usize) -> Result<f64, StatsError> {
    let significant = desirable + undesirable;
    if significant == 0 {
        return Err(StatsError::NoSignificantChange);
    }
    Ok(100.0 * desirable as f64 / significant as f64)
}

pub fn qos_improvement(c: &Classification) -> Result<f64, StatsError> {
    let s = c.summary();
    qos_from_counts(s.desirable, s.undesirable)
}

/// The QoS line appended to comparison reports.
pub fn qos_line(c: &Classification) -> String {
    match qos_improvement(c) {
        Ok(pct) => format!("QoS improvement: {pct:.2}%"),
        Err(_) => "QoS improvement: n/a (NoSignificantChange)".to_string(),
    }
}

/// Counter lines, then (if given) one verdict line per counter, a summary
/// line and the QoS line.
pub fn render_report(ledger: &StatsLedger, classification: Option<&Classification>) -> String {
    let mut out = ledger.to_text();
    if let Some(c) = classification {
        for (k, verdict, delta) in c.iter() {
            writeln!(out, "{k}: {verdict} ({delta:+})").unwrap();
        }
        let s = c.summary();
        writeln!(
            out,
            "summary: desirable={} undesirable={} insignificant={}",
            s.desirable, s.undesirable, s.insignificant
        )
        .unwrap();
        writeln!(out, "{}", qos_line(c)).unwrap();
    }
    out
}
