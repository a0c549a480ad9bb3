//! Finite-load airtime model for throughput, delay and congestion.
//!
//! Every flow occupies `offered / L` packets per second, each costing a
//! fixed per-packet airtime (DIFS + mean backoff + preamble + payload +
//! SIFS + ACK). A channel's utilization `U` is the sum over its flows;
//! every device on a channel hears every other, so there is one
//! contention domain per channel. Above `U = 1` the channel is congested
//! and each hop delivers a `1/U` share of its offered load. Per-hop delay
//! scales as `T / (1 - U)` and is capped at `d_cap_ms`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Band, ChannelId, ExternalLoad, NodeId, Topology, TrafficProfile,
};
use crate::radio::RadioEnv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopKind {
    Access,
    Backhaul,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub src: NodeId,
    pub dst: NodeId,
    pub channel: ChannelId,
    pub offered_bps: f64,
    pub phy_rate_bps: f64,
    pub hop_kind: HopKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacOverheads {
    pub difs_us: f64,
    pub sifs_us: f64,
    pub slot_us: f64,
    pub avg_backoff_slots: f64,
    pub ack_us: f64,
    pub phy_preamble_us: f64,
}

impl MacOverheads {
    pub const ZERO: MacOverheads = MacOverheads {
        difs_us: 0.0,
        sifs_us: 0.0,
        slot_us: 0.0,
        avg_backoff_slots: 0.0,
        ack_us: 0.0,
        phy_preamble_us: 0.0,
    };

    pub fn default_for(band: Band) -> Self {
        match band {
            Band::Band2G4 => MacOverheads {
                difs_us: 28.0,
                sifs_us: 10.0,
                slot_us: 9.0,
                avg_backoff_slots: 7.5,
                ack_us: 32.0,
                phy_preamble_us: 40.0,
            },
            Band::Band5G => MacOverheads {
                difs_us: 34.0,
                sifs_us: 16.0,
                ..MacOverheads::default_for(Band::Band2G4)
            },
        }
    }

    /// Fixed per-packet cost, excluding payload serialization.
    pub fn fixed_us(&self) -> f64 {
        self.difs_us
            + self.avg_backoff_slots * self.slot_us
            + self.phy_preamble_us
            + self.sifs_us
            + self.ack_us
    }

    pub fn check(&self) -> Result<()> {
        let all = [
            self.difs_us,
            self.sifs_us,
            self.slot_us,
            self.avg_backoff_slots,
            self.ack_us,
            self.phy_preamble_us,
        ];
        if all.iter().all(|v| *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("MAC overheads must be non-negative".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacParams {
    pub band_2g4: MacOverheads,
    pub band_5g: MacOverheads,
    /// Delay charged to a hop on a saturated channel.
    pub d_cap_ms: f64,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            band_2g4: MacOverheads::default_for(Band::Band2G4),
            band_5g: MacOverheads::default_for(Band::Band5G),
            d_cap_ms: 10_000.0,
        }
    }
}

impl MacParams {
    pub fn for_band(&self, band: Band) -> &MacOverheads {
        match band {
            Band::Band2G4 => &self.band_2g4,
            Band::Band5G => &self.band_5g,
        }
    }
}

/// Static inputs shared by every evaluation of one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub radio: RadioEnv,
    pub mac: MacParams,
    pub traffic: TrafficProfile,
    pub external: Vec<ExternalLoad>,
}

impl Environment {
    pub fn airtime_s(&self, flow: &Flow) -> f64 {
        flow_airtime_s(flow, self.traffic.packet_length_bits, self.mac.for_band(flow.channel.band))
    }

    /// Utilization a flow adds to its channel.
    pub fn utilization(&self, flow: &Flow) -> f64 {
        flow.offered_bps / self.traffic.packet_length_bits * self.airtime_s(flow)
    }
}

/// Per-packet airtime of a flow in seconds.
pub fn flow_airtime_s(f: &Flow, l_bits: f64, o: &MacOverheads) -> f64 {
    o.fixed_us() * 1e-6 + l_bits / f.phy_rate_bps
}

/// Per-channel utilization `U`, unclamped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelLoads {
    entries: Vec<(ChannelId, f64)>,
}

impl ChannelLoads {
    pub fn utilization(&self, ch: ChannelId) -> f64 {
        self.entries
            .iter()
            .find(|(c, _)| *c == ch)
            .map_or(0.0, |(_, u)| *u)
    }

    pub fn busy_fraction(&self, ch: ChannelId) -> f64 {
        self.utilization(ch).min(1.0)
    }

    pub fn add(&mut self, ch: ChannelId, du: f64) {
        match self.entries.iter_mut().find(|(c, _)| *c == ch) {
            Some((_, u)) => *u += du,
            None => self.entries.push((ch, du)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ChannelId, f64)> + '_ {
        self.entries.iter().copied()
    }
}

fn sta_access_flow(t: &Topology, env: &Environment, sta: NodeId, parent: NodeId) -> Result<Flow> {
    let channel = t.access_channel(parent)?;
    let rate = env.radio.link_rate(t, sta, parent, Band::Band2G4)?;
    Ok(Flow {
        src: sta,
        dst: parent,
        channel,
        offered_bps: env.traffic.per_sta_load_bps,
        phy_rate_bps: rate.phy_rate_bps,
        hop_kind: HopKind::Access,
    })
}

fn backhaul_flow(
    t: &Topology,
    env: &Environment,
    child: NodeId,
    parent: NodeId,
    offered_bps: f64,
) -> Result<Flow> {
    let channel = t
        .node(child)?
        .backhaul_radio()
        .map(|r| r.channel)
        .ok_or_else(|| Error::InvalidParameter(format!("extender {child} has no backhaul radio")))?;
    let rate = env.radio.link_rate(t, child, parent, Band::Band5G)?;
    Ok(Flow {
        src: child,
        dst: parent,
        channel,
        offered_bps,
        phy_rate_bps: rate.phy_rate_bps,
        hop_kind: HopKind::Backhaul,
    })
}

fn external_flow(e: &ExternalLoad) -> Flow {
    Flow {
        src: NodeId(u32::MAX),
        dst: NodeId(u32::MAX),
        channel: e.channel,
        offered_bps: e.load_bps,
        phy_rate_bps: e.phy_rate_bps,
        hop_kind: HopKind::External,
    }
}

fn build_flows_excluding(
    t: &Topology,
    env: &Environment,
    exclude: Option<NodeId>,
) -> Result<Vec<Flow>> {
    let mut flows = Vec::new();
    let mut backhaul_offered: BTreeMap<NodeId, f64> = t.extenders().map(|e| (e.id, 0.0)).collect();
    for (&sta, &parent) in &t.associations {
        if Some(sta) == exclude {
            continue;
        }
        flows.push(sta_access_flow(t, env, sta, parent)?);
        for link in t.backhaul_path(parent)? {
            *backhaul_offered.entry(link.child).or_insert(0.0) += env.traffic.per_sta_load_bps;
        }
    }
    for (child, offered) in backhaul_offered {
        let parent = *t.backhaul_parent.get(&child).ok_or_else(|| {
            Error::InvalidParameter(format!("extender {child} has no backhaul parent"))
        })?;
        flows.push(backhaul_flow(t, env, child, parent, offered)?);
    }
    flows.extend(env.external.iter().map(external_flow));
    Ok(flows)
}

/// Access flow per associated STA, one aggregated backhaul flow per
/// Extender link, and one flow per external load.
pub fn build_flows(t: &Topology, env: &Environment) -> Result<Vec<Flow>> {
    build_flows_excluding(t, env, None)
}

fn loads_of(env: &Environment, flows: &[Flow]) -> ChannelLoads {
    let mut loads = ChannelLoads::default();
    for f in flows {
        loads.add(f.channel, env.utilization(f));
    }
    loads
}

/// Channel utilization of the current state.
pub fn channel_loads(t: &Topology, env: &Environment) -> Result<ChannelLoads> {
    Ok(loads_of(env, &build_flows(t, env)?))
}

/// Channel utilization with `sta` removed from the network.
pub fn channel_loads_without(t: &Topology, env: &Environment, sta: NodeId) -> Result<ChannelLoads> {
    Ok(loads_of(env, &build_flows_excluding(t, env, Some(sta))?))
}

/// Utilization `sta` would add to each channel if associated to `parent`:
/// its access hop plus one backhaul hop per link up to the AP.
pub fn sta_contribution(
    t: &Topology,
    env: &Environment,
    sta: NodeId,
    parent: NodeId,
) -> Result<Vec<(ChannelId, f64)>> {
    let mut out = vec![];
    let access = sta_access_flow(t, env, sta, parent)?;
    out.push((access.channel, env.utilization(&access)));
    for link in t.backhaul_path(parent)? {
        let f = backhaul_flow(t, env, link.child, link.parent, env.traffic.per_sta_load_bps)?;
        out.push((f.channel, env.utilization(&f)));
    }
    Ok(out)
}

/// `min(1, U)` on `channel`, external loads included.
pub fn busy_fraction(t: &Topology, env: &Environment, channel: ChannelId) -> Result<f64> {
    Ok(channel_loads(t, env)?.busy_fraction(channel))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub channel: ChannelId,
    pub utilization: f64,
    pub busy_fraction: f64,
    pub flows: Vec<Flow>,
}

impl ChannelState {
    pub fn congested(&self) -> bool {
        self.utilization > 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaPerf {
    pub delivered_bps: f64,
    pub delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub per_sta: BTreeMap<NodeId, StaPerf>,
    pub per_channel: BTreeMap<ChannelId, ChannelState>,
    pub network_throughput_pct: f64,
    pub avg_delay_ms: f64,
    pub congested: bool,
}

fn hop_delay_ms(airtime_s: f64, u: f64, d_cap_ms: f64) -> f64 {
    if u < 1.0 {
        (airtime_s * 1e3 / (1.0 - u)).min(d_cap_ms)
    } else {
        d_cap_ms
    }
}

/// Throughput, delay and congestion of the current associations.
/// Unassociated STAs are not part of the report.
pub fn evaluate(t: &Topology, env: &Environment) -> Result<PerfReport> {
    let flows = build_flows(t, env)?;

    let mut per_channel: BTreeMap<ChannelId, ChannelState> = BTreeMap::new();
    for f in &flows {
        let u = env.utilization(f);
        let state = per_channel.entry(f.channel).or_insert_with(|| ChannelState {
            channel: f.channel,
            utilization: 0.0,
            busy_fraction: 0.0,
            flows: Vec::new(),
        });
        state.utilization += u;
        state.flows.push(*f);
    }
    for s in per_channel.values_mut() {
        s.busy_fraction = s.utilization.min(1.0);
    }

    // Hop lookup: access flows by STA, backhaul flows by child Extender.
    let mut access: BTreeMap<NodeId, &Flow> = BTreeMap::new();
    let mut backhaul: BTreeMap<NodeId, &Flow> = BTreeMap::new();
    for f in &flows {
        match f.hop_kind {
            HopKind::Access => {
                access.insert(f.src, f);
            }
            HopKind::Backhaul => {
                backhaul.insert(f.src, f);
            }
            HopKind::External => {}
        }
    }
    let hop = |f: &Flow| -> (f64, f64) {
        let u = per_channel[&f.channel].utilization;
        let fraction = if u > 1.0 { 1.0 / u } else { 1.0 };
        (fraction, hop_delay_ms(env.airtime_s(f), u, env.mac.d_cap_ms))
    };

    let mut per_sta = BTreeMap::new();
    let mut offered = 0.0;
    let mut delivered = 0.0;
    let mut delay_sum = 0.0;
    for (&sta, &parent) in &t.associations {
        let (mut fraction, mut delay) = hop(access[&sta]);
        for link in t.backhaul_path(parent)? {
            let (fr, d) = hop(backhaul[&link.child]);
            fraction *= fr;
            delay += d;
        }
        let b = env.traffic.per_sta_load_bps * fraction;
        offered += env.traffic.per_sta_load_bps;
        delivered += b;
        delay_sum += delay;
        per_sta.insert(
            sta,
            StaPerf {
                delivered_bps: b,
                delay_ms: delay,
            },
        );
    }

    let n = per_sta.len();
    let network_throughput_pct = if offered > 0.0 {
        (100.0 * (delivered / offered)).clamp(0.0, 100.0)
    } else {
        100.0
    };
    let avg_delay_ms = if n > 0 { delay_sum / n as f64 } else { 0.0 };
    let congested = per_channel.values().any(ChannelState::congested);
    Ok(PerfReport {
        per_sta,
        per_channel,
        network_throughput_pct,
        avg_delay_ms,
        congested,
    })
}
