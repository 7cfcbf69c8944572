//! Node identity shared by every layer of the simulator.

use std::fmt;
use std::str::FromStr;

/// Identifier of a simulated node. Ordering is numeric and is used for every
/// deterministic tie-break in the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(NodeId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    MobileStation,
    BaseStation,
    Mote,
    Satellite,
    Msc,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::MobileStation,
        NodeKind::BaseStation,
        NodeKind::Mote,
        NodeKind::Satellite,
        NodeKind::Msc,
    ];

    /// Short token used in scenario files.
    pub fn token(self) -> &'static str {
        match self {
            NodeKind::MobileStation => "ms",
            NodeKind::BaseStation => "bs",
            NodeKind::Mote => "mote",
            NodeKind::Satellite => "satellite",
            NodeKind::Msc => "msc",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.token() == token)
    }

    /// Nodes that take part in the terrestrial 802.11 channel.
    pub fn is_terrestrial_radio(self) -> bool {
        matches!(
            self,
            NodeKind::MobileStation | NodeKind::BaseStation | NodeKind::Mote
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}
