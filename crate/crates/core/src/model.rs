//! Domain types for a multi-AP/Extender WLAN: nodes, radios, channels,
//! traffic, and the topology graph with its backhaul tree.
//!
//! Node `0` is always the AP, the single gateway and root of the backhaul
//! tree. Extenders hang off the AP (or off another Extender) through a
//! 5 GHz backhaul link; STAs associate to exactly one AP/Extender over a
//! 2.4 GHz access link.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default maximum number of consecutive Extenders on a backhaul path.
pub const DEFAULT_MAX_CHAIN: usize = 2;
/// Default uplink packet length in bits.
pub const DEFAULT_PACKET_LENGTH_BITS: f64 = 12_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const AP: NodeId = NodeId(0);

    pub fn is_ap(self) -> bool {
        self == Self::AP
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "2.4GHz")]
    Band2G4,
    #[serde(rename = "5GHz")]
    Band5G,
}

impl Band {
    /// Nominal band frequency used by the path-loss model.
    pub fn nominal_frequency_mhz(self) -> f64 {
        match self {
            Band::Band2G4 => 2400.0,
            Band::Band5G => 5000.0,
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Band::Band2G4 => f.write_str("2.4GHz"),
            Band::Band5G => f.write_str("5GHz"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelId {
    pub band: Band,
    pub number: u16,
}

impl ChannelId {
    pub const fn new(band: Band, number: u16) -> Self {
        ChannelId { band, number }
    }

    pub const fn g24(number: u16) -> Self {
        ChannelId::new(Band::Band2G4, number)
    }

    pub const fn g5(number: u16) -> Self {
        ChannelId::new(Band::Band5G, number)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/ch{}", self.band, self.number)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub channel: ChannelId,
    pub tx_power_dbm: f64,
    pub sensitivity_dbm: f64,
    pub spatial_streams: u8,
}

impl RadioConfig {
    pub fn new(
        channel: ChannelId,
        tx_power_dbm: f64,
        sensitivity_dbm: f64,
        spatial_streams: u8,
    ) -> Result<Self> {
        let radio = RadioConfig {
            channel,
            tx_power_dbm,
            sensitivity_dbm,
            spatial_streams,
        };
        radio.check()?;
        Ok(radio)
    }

    /// Radio with the common defaults: 20 dBm, -90 dBm sensitivity, 2 streams.
    pub fn standard(channel: ChannelId) -> Self {
        RadioConfig {
            channel,
            tx_power_dbm: 20.0,
            sensitivity_dbm: -90.0,
            spatial_streams: 2,
        }
    }

    pub fn band(&self) -> Band {
        self.channel.band
    }

    pub fn check(&self) -> Result<()> {
        if !(self.sensitivity_dbm < self.tx_power_dbm) {
            return Err(Error::InvalidParameter(format!(
                "sensitivity {} dBm must be below tx power {} dBm",
                self.sensitivity_dbm, self.tx_power_dbm
            )));
        }
        if !(1..=4).contains(&self.spatial_streams) {
            return Err(Error::InvalidParameter(format!(
                "spatial streams must be in 1..=4, got {}",
                self.spatial_streams
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Ap,
    Extender,
    Sta,
}

impl NodeKind {
    pub fn is_infrastructure(self) -> bool {
        matches!(self, NodeKind::Ap | NodeKind::Extender)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub position: Position,
    pub radios: Vec<RadioConfig>,
    #[serde(default)]
    pub supports_11kv: bool,
}

impl Node {
    /// AP or Extender with a 2.4 GHz access radio and a 5 GHz backhaul radio.
    pub fn infrastructure(
        id: NodeId,
        kind: NodeKind,
        position: Position,
        access_channel: ChannelId,
        backhaul_channel: ChannelId,
    ) -> Self {
        Node {
            id,
            kind,
            position,
            radios: vec![
                RadioConfig::standard(access_channel),
                RadioConfig::standard(backhaul_channel),
            ],
            supports_11kv: false,
        }
    }

    pub fn sta(id: NodeId, position: Position, supports_11kv: bool) -> Self {
        Node {
            id,
            kind: NodeKind::Sta,
            position,
            radios: vec![RadioConfig::standard(ChannelId::g24(1))],
            supports_11kv,
        }
    }

    pub fn radio(&self, band: Band) -> Option<&RadioConfig> {
        self.radios.iter().find(|r| r.band() == band)
    }

    /// The 2.4 GHz radio: access radio of an AP/Extender, or the STA's radio.
    pub fn access_radio(&self) -> Option<&RadioConfig> {
        self.radio(Band::Band2G4)
    }

    pub fn backhaul_radio(&self) -> Option<&RadioConfig> {
        if self.kind.is_infrastructure() {
            self.radio(Band::Band5G)
        } else {
            None
        }
    }
}

/// One hop of the backhaul tree, from `child` up to `parent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BackhaulLink {
    pub child: NodeId,
    pub parent: NodeId,
}

/// An invariant violation reported by [`validate_topology`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    MissingAp,
    NodeZeroNotAp { kind: NodeKind },
    ExtraAp { node: NodeId },
    IdMismatch { key: NodeId, node: NodeId },
    RadioCount { node: NodeId, count: usize },
    RadioBands { node: NodeId },
    InvalidRadio { node: NodeId, reason: String },
    CapabilityOnInfrastructure { node: NodeId },
    MissingBackhaulParent { node: NodeId },
    BackhaulOnNonExtender { node: NodeId },
    DanglingBackhaulParent { node: NodeId, parent: NodeId },
    BackhaulParentKind { node: NodeId, parent: NodeId },
    Cycle { node: NodeId },
    ChainTooLong { node: NodeId, length: usize, max: usize },
    AssociationSourceKind { node: NodeId },
    DanglingAssociation { sta: NodeId, target: NodeId },
    AssociationTargetKind { sta: NodeId, target: NodeId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TopologyRepr", into = "TopologyRepr")]
pub struct Topology {
    pub nodes: BTreeMap<NodeId, Node>,
    pub associations: BTreeMap<NodeId, NodeId>,
    pub backhaul_parent: BTreeMap<NodeId, NodeId>,
    pub max_chain: usize,
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr {
    nodes: Vec<Node>,
    #[serde(default)]
    backhaul: Vec<BackhaulLink>,
    #[serde(default)]
    associations: Vec<AssociationRepr>,
    #[serde(default = "default_max_chain")]
    max_chain: usize,
}

#[derive(Serialize, Deserialize)]
struct AssociationRepr {
    sta: NodeId,
    parent: NodeId,
}

fn default_max_chain() -> usize {
    DEFAULT_MAX_CHAIN
}

impl From<TopologyRepr> for Topology {
    fn from(r: TopologyRepr) -> Self {
        Topology {
            nodes: r.nodes.into_iter().map(|n| (n.id, n)).collect(),
            associations: r.associations.into_iter().map(|a| (a.sta, a.parent)).collect(),
            backhaul_parent: r.backhaul.into_iter().map(|l| (l.child, l.parent)).collect(),
            max_chain: r.max_chain,
        }
    }
}

impl From<Topology> for TopologyRepr {
    fn from(t: Topology) -> Self {
        TopologyRepr {
            nodes: t.nodes.into_values().collect(),
            backhaul: t
                .backhaul_parent
                .into_iter()
                .map(|(child, parent)| BackhaulLink { child, parent })
                .collect(),
            associations: t
                .associations
                .into_iter()
                .map(|(sta, parent)| AssociationRepr { sta, parent })
                .collect(),
            max_chain: t.max_chain,
        }
    }
}

impl Topology {
    pub fn new(max_chain: usize) -> Self {
        Topology {
            nodes: BTreeMap::new(),
            associations: BTreeMap::new(),
            backhaul_parent: BTreeMap::new(),
            max_chain,
        }
    }

    pub fn add_node(&mut self, node: Node) {
        self.nodes.insert(node.id, node);
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(&id).ok_or(Error::UnknownNode(id))
    }

    pub fn kind(&self, id: NodeId) -> Result<NodeKind> {
        self.node(id).map(|n| n.kind)
    }

    pub fn next_id(&self) -> NodeId {
        self.nodes
            .keys()
            .next_back()
            .map_or(NodeId(0), |id| NodeId(id.0 + 1))
    }

    /// AP first, then Extenders in ascending id.
    pub fn infrastructure(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.values().filter(|n| n.kind.is_infrastructure())
    }

    pub fn stas(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.values().filter(|n| n.kind == NodeKind::Sta)
    }

    pub fn extenders(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.values().filter(|n| n.kind == NodeKind::Extender)
    }

    pub fn parent_of(&self, sta: NodeId) -> Option<NodeId> {
        self.associations.get(&sta).copied()
    }

    /// STAs currently associated to `parent`, ascending id.
    pub fn stas_of(&self, parent: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.associations
            .iter()
            .filter(move |(_, p)| **p == parent)
            .map(|(s, _)| *s)
    }

    /// Channel of the access radio of an AP/Extender.
    pub fn access_channel(&self, id: NodeId) -> Result<ChannelId> {
        let node = self.node(id)?;
        if !node.kind.is_infrastructure() {
            return Err(Error::KindMismatch {
                node: id,
                actual: node.kind,
                expected: "AP or Extender",
            });
        }
        node.access_radio()
            .map(|r| r.channel)
            .ok_or_else(|| Error::InvalidParameter(format!("node {id} has no access radio")))
    }

    /// Backhaul links from `target` up to the AP, in order. Empty for the AP.
    pub fn backhaul_path(&self, target: NodeId) -> Result<Vec<BackhaulLink>> {
        let node = self.node(target)?;
        match node.kind {
            NodeKind::Ap => return Ok(Vec::new()),
            NodeKind::Sta => {
                return Err(Error::KindMismatch {
                    node: target,
                    actual: NodeKind::Sta,
                    expected: "AP or Extender",
                })
            }
            NodeKind::Extender => {}
        }
        let mut path = Vec::new();
        let mut current = target;
        while !current.is_ap() {
            let parent = *self.backhaul_parent.get(&current).ok_or_else(|| {
                Error::InvalidParameter(format!("extender {current} has no backhaul parent"))
            })?;
            path.push(BackhaulLink {
                child: current,
                parent,
            });
            if path.len() > self.nodes.len() {
                return Err(Error::InvalidParameter(format!(
                    "backhaul cycle through node {target}"
                )));
            }
            current = parent;
        }
        Ok(path)
    }

    /// Associates `sta` with `parent`, replacing any previous association.
    /// Returns the previous parent.
    pub fn set_association(&mut self, sta: NodeId, parent: NodeId) -> Result<Option<NodeId>> {
        let sta_kind = self.kind(sta)?;
        if sta_kind != NodeKind::Sta {
            return Err(Error::KindMismatch {
                node: sta,
                actual: sta_kind,
                expected: "STA",
            });
        }
        let parent_kind = self.kind(parent)?;
        if !parent_kind.is_infrastructure() {
            return Err(Error::KindMismatch {
                node: parent,
                actual: parent_kind,
                expected: "AP or Extender",
            });
        }
        Ok(self.associations.insert(sta, parent))
    }

    /// Copying form of [`Topology::set_association`].
    pub fn with_association(&self, sta: NodeId, parent: NodeId) -> Result<Topology> {
        let mut t = self.clone();
        t.set_association(sta, parent)?;
        Ok(t)
    }

    pub fn clear_association(&mut self, sta: NodeId) -> Option<NodeId> {
        self.associations.remove(&sta)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_topology(self)
    }
}

/// Returns every invariant violation of `t`; empty iff well-formed.
pub fn validate_topology(t: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();

    match t.nodes.get(&NodeId::AP) {
        None => out.push(Violation::MissingAp),
        Some(n) if n.kind != NodeKind::Ap => out.push(Violation::NodeZeroNotAp { kind: n.kind }),
        Some(_) => {}
    }

    for (key, node) in &t.nodes {
        if *key != node.id {
            out.push(Violation::IdMismatch {
                key: *key,
                node: node.id,
            });
        }
        let id = node.id;
        if node.kind == NodeKind::Ap && !id.is_ap() {
            out.push(Violation::ExtraAp { node: id });
        }
        for radio in &node.radios {
            if let Err(e) = radio.check() {
                out.push(Violation::InvalidRadio {
                    node: id,
                    reason: e.to_string(),
                });
            }
        }
        match node.kind {
            NodeKind::Ap | NodeKind::Extender => {
                if node.radios.len() != 2 {
                    out.push(Violation::RadioCount {
                        node: id,
                        count: node.radios.len(),
                    });
                } else if node.radios[0].band() == node.radios[1].band() {
                    out.push(Violation::RadioBands { node: id });
                }
                if node.supports_11kv {
                    out.push(Violation::CapabilityOnInfrastructure { node: id });
                }
            }
            NodeKind::Sta => {
                if node.radios.len() != 1 {
                    out.push(Violation::RadioCount {
                        node: id,
                        count: node.radios.len(),
                    });
                }
            }
        }
        if node.kind == NodeKind::Extender && !t.backhaul_parent.contains_key(&id) {
            out.push(Violation::MissingBackhaulParent { node: id });
        }
    }

    for (child, parent) in &t.backhaul_parent {
        match t.nodes.get(child) {
            Some(n) if n.kind == NodeKind::Extender => {}
            _ => out.push(Violation::BackhaulOnNonExtender { node: *child }),
        }
        match t.nodes.get(parent) {
            None => out.push(Violation::DanglingBackhaulParent {
                node: *child,
                parent: *parent,
            }),
            Some(p) if !p.kind.is_infrastructure() => out.push(Violation::BackhaulParentKind {
                node: *child,
                parent: *parent,
            }),
            Some(_) => {}
        }
    }

    // Walk each Extender up to the AP; count hops and detect cycles.
    for ext in t.extenders() {
        let mut current = ext.id;
        let mut hops = 0usize;
        let mut cyclic = false;
        while let Some(parent) = t.backhaul_parent.get(&current) {
            hops += 1;
            if hops > t.nodes.len() {
                cyclic = true;
                break;
            }
            current = *parent;
        }
        if cyclic {
            out.push(Violation::Cycle { node: ext.id });
        } else if hops > t.max_chain {
            out.push(Violation::ChainTooLong {
                node: ext.id,
                length: hops,
                max: t.max_chain,
            });
        }
    }

    for (sta, target) in &t.associations {
        match t.nodes.get(sta) {
            Some(n) if n.kind == NodeKind::Sta => {}
            _ => out.push(Violation::AssociationSourceKind { node: *sta }),
        }
        match t.nodes.get(target) {
            None => out.push(Violation::DanglingAssociation {
                sta: *sta,
                target: *target,
            }),
            Some(n) if !n.kind.is_infrastructure() => out.push(Violation::AssociationTargetKind {
                sta: *sta,
                target: *target,
            }),
            Some(_) => {}
        }
    }

    out
}

/// Per-STA and network-wide uplink traffic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub packet_length_bits: f64,
    pub per_sta_load_bps: f64,
    pub total_load_bps: f64,
}

impl TrafficProfile {
    pub fn new(packet_length_bits: f64, per_sta_load_bps: f64, n_sta: usize) -> Result<Self> {
        if !(packet_length_bits > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "packet length must be positive, got {packet_length_bits}"
            )));
        }
        if !(per_sta_load_bps >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "per-STA load must be non-negative, got {per_sta_load_bps}"
            )));
        }
        Ok(TrafficProfile {
            packet_length_bits,
            per_sta_load_bps,
            total_load_bps: per_sta_load_bps * n_sta as f64,
        })
    }
}

/// Load offered by a neighbouring network on one of our channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalLoad {
    pub channel: ChannelId,
    pub load_bps: f64,
    pub phy_rate_bps: f64,
}

impl ExternalLoad {
    pub const DEFAULT_PHY_RATE_BPS: f64 = 65e6;

    pub fn new(channel: ChannelId, load_bps: f64, phy_rate_bps: f64) -> Result<Self> {
        if !(load_bps >= 0.0) || !(phy_rate_bps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "external load needs load >= 0 and rate > 0, got {load_bps} / {phy_rate_bps}"
            )));
        }
        Ok(ExternalLoad {
            channel,
            load_bps,
            phy_rate_bps,
        })
    }
}
