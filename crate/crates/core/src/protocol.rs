//! Simulated 802.11k/v exchange driving the load-aware selection.
//!
//! Frames are structured records. The four stages run as:
//! 1. every STA associates to its strongest AP/Extender;
//! 2. the AP asks each capable STA for a beacon report and every
//!    AP/Extender for a channel load report;
//! 3. the AP ranks candidates and sends a BTM request;
//! 4. the STA accepts and reassociates to the first feasible candidate.
//!
//! Stages 2 to 4 run STA by STA (ascending id) so every decision sees the
//! loads left by the previous move.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, ChannelId, NodeId, Topology};
use crate::perf::{self, Environment};
use crate::selection::{self, CandidateList, LoadRefresh, Mechanism, SelectionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    #[default]
    ActiveScan,
    PassiveScan,
    BeaconTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeaconEntry {
    pub bssid: NodeId,
    pub frequency: Band,
    pub channel: ChannelId,
    pub rssi_dbm: f64,
}

/// Default length of a channel load measurement.
pub const MEASUREMENT_DURATION_MS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Frame {
    AssocRequest {
        sta: NodeId,
        target: NodeId,
        reassociation: bool,
    },
    AssocResponse {
        accepted: bool,
        supports_11kv_echo: bool,
    },
    /// An Extender telling the AP about a newly associated STA.
    AssocNotify {
        sta: NodeId,
        parent: NodeId,
        supports_11kv: bool,
    },
    BeaconRequest {
        mode: MeasurementMode,
        channels: Vec<ChannelId>,
    },
    BeaconReport {
        entries: Vec<BeaconEntry>,
    },
    ChannelLoadRequest {
        channel: ChannelId,
    },
    ChannelLoadReport {
        channel: ChannelId,
        busy_fraction: f64,
        measurement_duration_ms: f64,
    },
    BtmQuery {},
    BtmRequest {
        candidates: CandidateList,
    },
    BtmResponse {
        accept: bool,
    },
    /// Not a frame: the AP had no candidate to offer.
    Skip {
        reason: String,
    },
}

impl Frame {
    pub fn name(&self) -> &'static str {
        match self {
            Frame::AssocRequest { .. } => "AssocRequest",
            Frame::AssocResponse { .. } => "AssocResponse",
            Frame::AssocNotify { .. } => "AssocNotify",
            Frame::BeaconRequest { .. } => "BeaconRequest",
            Frame::BeaconReport { .. } => "BeaconReport",
            Frame::ChannelLoadRequest { .. } => "ChannelLoadRequest",
            Frame::ChannelLoadReport { .. } => "ChannelLoadReport",
            Frame::BtmQuery {} => "BtmQuery",
            Frame::BtmRequest { .. } => "BtmRequest",
            Frame::BtmResponse { .. } => "BtmResponse",
            Frame::Skip { .. } => "Skip",
        }
    }

    /// True for 802.11k and 802.11v frames.
    pub fn is_kv(&self) -> bool {
        matches!(
            self,
            Frame::BeaconRequest { .. }
                | Frame::BeaconReport { .. }
                | Frame::ChannelLoadRequest { .. }
                | Frame::ChannelLoadReport { .. }
                | Frame::BtmQuery {}
                | Frame::BtmRequest { .. }
                | Frame::BtmResponse { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    pub src: NodeId,
    pub dst: NodeId,
    /// STA whose exchange this frame belongs to.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sta: Option<NodeId>,
    pub frame: Frame,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, src: NodeId, dst: NodeId, sta: Option<NodeId>, frame: Frame) {
        let step = self.events.len() as u64;
        self.events.push(Event {
            step,
            src,
            dst,
            sta,
            frame,
        });
    }

    pub fn extend(&mut self, other: EventLog) {
        for e in other.events {
            self.push(e.src, e.dst, e.sta, e.frame);
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn frames_for(&self, sta: NodeId) -> impl Iterator<Item = &Event> + '_ {
        self.events.iter().filter(move |e| e.sta == Some(sta))
    }

    /// One JSON object per line.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Events whose stage goes backwards within one STA's exchange.
    /// Each new balancing round for the STA restarts at the beacon
    /// request.
    pub fn order_violations(&self) -> Vec<&Event> {
        let mut last: BTreeMap<NodeId, u8> = BTreeMap::new();
        let mut bad = Vec::new();
        for e in &self.events {
            let Some(sta) = e.sta else { continue };
            let prev = last.get(&sta).copied().unwrap_or(0);
            // response and notify of a reassociation close stage 4
            let r = match e.frame {
                Frame::AssocResponse { .. } | Frame::AssocNotify { .. } if prev == 7 => 7,
                _ => stage_rank(&e.frame),
            };
            let restart = matches!(e.frame, Frame::BeaconRequest { .. }) && prev >= 1;
            if r < prev && !restart {
                bad.push(e);
            }
            last.insert(sta, r);
        }
        bad
    }
}

fn stage_rank(f: &Frame) -> u8 {
    match f {
        Frame::AssocRequest { reassociation: false, .. } => 1,
        Frame::AssocResponse { .. } | Frame::AssocNotify { .. } => 1,
        Frame::BeaconRequest { .. } => 2,
        Frame::BeaconReport { .. } => 3,
        Frame::ChannelLoadRequest { .. } | Frame::ChannelLoadReport { .. } => 4,
        Frame::BtmQuery {} | Frame::BtmRequest { .. } | Frame::Skip { .. } => 5,
        Frame::BtmResponse { .. } => 6,
        Frame::AssocRequest { reassociation: true, .. } => 7,
    }
}

fn log_association(log: &mut EventLog, t: &Topology, sta: NodeId, target: NodeId, reassoc: bool) -> Result<()> {
    let capable = t.node(sta)?.supports_11kv;
    log.push(
        sta,
        target,
        Some(sta),
        Frame::AssocRequest {
            sta,
            target,
            reassociation: reassoc,
        },
    );
    log.push(
        target,
        sta,
        Some(sta),
        Frame::AssocResponse {
            accepted: true,
            supports_11kv_echo: capable,
        },
    );
    if target != NodeId::AP {
        log.push(
            target,
            NodeId::AP,
            Some(sta),
            Frame::AssocNotify {
                sta,
                parent: target,
                supports_11kv: capable,
            },
        );
    }
    Ok(())
}

/// Associates every STA to its strongest AP/Extender. STAs with nothing
/// in range stay unassociated and send nothing.
pub fn stage1_initial_association(t: &Topology, env: &Environment) -> Result<(Topology, EventLog)> {
    let mut out = t.clone();
    out.associations.clear();
    let mut log = EventLog::default();
    let stas: Vec<NodeId> = t.stas().map(|n| n.id).collect();
    for sta in stas {
        if let Some(target) = selection::best_rssi_target(&out, env, sta)? {
            out.set_association(sta, target)?;
            log_association(&mut log, &out, sta, target, false)?;
        }
    }
    Ok((out, log))
}

/// Reports gathered in stage 2.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Collected {
    pub beacon_reports: BTreeMap<NodeId, Vec<BeaconEntry>>,
    /// Busy fraction reported by each AP/Extender for its access channel.
    pub load_reports: BTreeMap<NodeId, f64>,
}

/// Beacon and channel load reports for `stas`. Non-capable and
/// unassociated STAs are skipped.
pub fn stage2_collect(
    t: &Topology,
    env: &Environment,
    stas: &[NodeId],
    mode: MeasurementMode,
    log: &mut EventLog,
) -> Result<Collected> {
    let mut out = Collected::default();
    let channels: Vec<ChannelId> = {
        let set: BTreeSet<ChannelId> = t.infrastructure().filter_map(|n| n.access_radio().map(|r| r.channel)).collect();
        set.into_iter().collect()
    };
    let loads = perf::channel_loads(t, env)?;
    for &sta in stas {
        if !t.node(sta)?.supports_11kv {
            continue;
        }
        let Some(parent) = t.parent_of(sta) else {
            continue;
        };
        log.push(
            NodeId::AP,
            sta,
            Some(sta),
            Frame::BeaconRequest {
                mode,
                channels: channels.clone(),
            },
        );
        let mut entries = Vec::new();
        for (bssid, rssi) in selection::observe(t, env, sta)? {
            entries.push(BeaconEntry {
                bssid,
                frequency: Band::Band2G4,
                channel: t.access_channel(bssid)?,
                rssi_dbm: rssi,
            });
        }
        log.push(sta, parent, Some(sta), Frame::BeaconReport { entries: entries.clone() });
        out.beacon_reports.insert(sta, entries);
        for node in t.infrastructure() {
            let channel = t.access_channel(node.id)?;
            let busy = loads.busy_fraction(channel);
            log.push(NodeId::AP, node.id, Some(sta), Frame::ChannelLoadRequest { channel });
            log.push(
                node.id,
                NodeId::AP,
                Some(sta),
                Frame::ChannelLoadReport {
                    channel,
                    busy_fraction: busy,
                    measurement_duration_ms: MEASUREMENT_DURATION_MS,
                },
            );
            out.load_reports.insert(node.id, busy);
        }
    }
    Ok(out)
}

/// Ranks each reporting STA's candidates and issues BTM requests.
/// `load_state` is the topology the loads are computed from. Emits
/// nothing for the RSSI-based mechanism.
pub fn stage3_decide(
    load_state: &Topology,
    env: &Environment,
    collected: &Collected,
    cfg: &SelectionConfig,
    log: &mut EventLog,
) -> Result<BTreeMap<NodeId, CandidateList>> {
    let mut out = BTreeMap::new();
    if cfg.mechanism == Mechanism::RssiBased {
        return Ok(out);
    }
    for (&sta, entries) in &collected.beacon_reports {
        let observed: Vec<(NodeId, f64)> = entries.iter().map(|e| (e.bssid, e.rssi_dbm)).collect();
        let list = selection::rank_observed(load_state, env, sta, &observed, cfg)?;
        if list.is_empty() {
            log.push(
                NodeId::AP,
                sta,
                Some(sta),
                Frame::Skip {
                    reason: "no candidate in range".into(),
                },
            );
            continue;
        }
        log.push(NodeId::AP, sta, Some(sta), Frame::BtmRequest { candidates: list.clone() });
        out.insert(sta, list);
    }
    Ok(out)
}

/// Every STA accepts its BTM request and walks the list until a
/// candidate it can hear. Returns the updated topology.
pub fn stage4_reassociate(
    t: &Topology,
    env: &Environment,
    requests: &BTreeMap<NodeId, CandidateList>,
    log: &mut EventLog,
) -> Result<Topology> {
    let mut out = t.clone();
    for (&sta, list) in requests {
        log.push(sta, NodeId::AP, Some(sta), Frame::BtmResponse { accept: true });
        let s = out
            .node(sta)?
            .access_radio()
            .ok_or_else(|| Error::InvalidParameter(format!("STA {sta} has no radio")))?
            .sensitivity_dbm;
        let current = out.parent_of(sta);
        for entry in &list.entries {
            let rssi = env.radio.link_rssi(&out, entry.target, sta, Band::Band2G4)?;
            if rssi < s {
                continue;
            }
            if Some(entry.target) != current {
                out.set_association(sta, entry.target)?;
                log_association(log, &out, sta, entry.target, true)?;
            }
            break;
        }
    }
    Ok(out)
}

/// Stages 2 to 4 for the capable STAs, honouring the pass count and
/// refresh mode of `cfg`.
pub fn balance(
    t: &Topology,
    env: &Environment,
    cfg: &SelectionConfig,
    mode: MeasurementMode,
) -> Result<(Topology, EventLog)> {
    cfg.check()?;
    let mut log = EventLog::default();
    let mut current = t.clone();
    if cfg.mechanism == Mechanism::RssiBased {
        return Ok((current, log));
    }
    let capable: Vec<NodeId> = t.stas().filter(|n| n.supports_11kv).map(|n| n.id).collect();
    for _ in 0..cfg.passes {
        match cfg.load_refresh {
            LoadRefresh::PerMove => {
                for &sta in &capable {
                    let collected = stage2_collect(&current, env, &[sta], mode, &mut log)?;
                    let requests = stage3_decide(&current, env, &collected, cfg, &mut log)?;
                    current = stage4_reassociate(&current, env, &requests, &mut log)?;
                }
            }
            LoadRefresh::Snapshot => {
                let collected = stage2_collect(&current, env, &capable, mode, &mut log)?;
                let requests = stage3_decide(&current, env, &collected, cfg, &mut log)?;
                current = stage4_reassociate(&current, env, &requests, &mut log)?;
            }
        }
    }
    Ok((current, log))
}

/// Full four-stage operation from an unassociated topology.
pub fn run_protocol(
    t: &Topology,
    env: &Environment,
    cfg: &SelectionConfig,
    mode: MeasurementMode,
) -> Result<(Topology, EventLog)> {
    let (assoc, mut log) = stage1_initial_association(t, env)?;
    let (out, rest) = balance(&assoc, env, cfg, mode)?;
    log.extend(rest);
    Ok((out, log))
}
