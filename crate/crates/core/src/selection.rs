//! AP/Extender selection: the default strongest-RSSI rule and the
//! channel-load-aware decision metric
//!
//! ```text
//! Y(i,j) = α·(RSSI*(i,j) + C_a(i,j)) + (1 − α)·Σ_{k ∈ path(j)} C_b(k)
//! RSSI*(i,j) = (RSSI(i,j) − P_t(j)) / (S(i) − P_t(j))
//! ```
//!
//! Lower `Y` is better. Loads are busy fractions from the airtime model.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, ChannelId, NodeId, NodeKind, Topology};
use crate::perf::{self, ChannelLoads, Environment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    #[serde(rename = "rssi", alias = "rssi-based", alias = "rssi_based")]
    RssiBased,
    #[serde(rename = "loadaware", alias = "load-aware", alias = "load_aware")]
    LoadAware,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::RssiBased => "rssi",
            Mechanism::LoadAware => "loadaware",
        }
    }
}

/// Order among candidates with equal keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// AP before Extenders, then ascending node id.
    #[default]
    ApThenLowerId,
    LowerId,
}

/// When channel loads are re-read during a reassociation pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadRefresh {
    /// After every move.
    #[default]
    PerMove,
    /// Once at the start of each pass.
    Snapshot,
}

/// Whether a candidate's loads count the deciding STA's own traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfLoad {
    /// Every candidate is scored as if the STA were associated to it.
    #[default]
    Include,
    /// Every candidate is scored with the STA removed from the network.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub mechanism: Mechanism,
    pub alpha: f64,
    pub beta_pct: f64,
    pub tie_break: TieBreak,
    pub passes: u32,
    pub load_refresh: LoadRefresh,
    pub self_load: SelfLoad,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            mechanism: Mechanism::RssiBased,
            alpha: 0.5,
            beta_pct: 100.0,
            tie_break: TieBreak::default(),
            passes: 1,
            load_refresh: LoadRefresh::default(),
            self_load: SelfLoad::default(),
        }
    }
}

impl SelectionConfig {
    pub fn rssi_based() -> Self {
        SelectionConfig::default()
    }

    pub fn load_aware(alpha: f64, beta_pct: f64) -> Self {
        SelectionConfig {
            mechanism: Mechanism::LoadAware,
            alpha,
            beta_pct,
            ..SelectionConfig::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..=100.0).contains(&self.beta_pct) {
            return Err(Error::InvalidParameter(format!(
                "beta must be in [0, 100], got {}",
                self.beta_pct
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub sta: NodeId,
    pub target: NodeId,
    pub rssi_dbm: f64,
    pub weighted_rssi: f64,
    pub access_load: f64,
    pub backhaul_load_sum: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub target: NodeId,
    pub channel: ChannelId,
    pub rssi_dbm: f64,
    /// Sort key: `Y` for the load-aware mechanism, `RSSI*` for the
    /// RSSI-based one. Ascending is better in both cases.
    pub score: f64,
}

/// Prioritized candidate list for one STA, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub sta: NodeId,
    pub entries: Vec<CandidateEntry>,
}

impl CandidateList {
    pub fn top(&self) -> Option<&CandidateEntry> {
        self.entries.first()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Inverse RSSI weighting: 0 at `p_t`, 1 at `s`. The input is clamped
/// into `[s, p_t]` first.
pub fn weighted_rssi(rssi_dbm: f64, p_t: f64, s: f64) -> Result<f64> {
    if !(s < p_t) {
        return Err(Error::InvalidParameter(format!(
            "sensitivity {s} dBm must be below tx power {p_t} dBm"
        )));
    }
    let r = rssi_dbm.clamp(s, p_t);
    Ok((r - p_t) / (s - p_t))
}

/// The decision metric from its components.
pub fn decision_metric(alpha: f64, weighted_rssi: f64, access_load: f64, backhaul_load_sum: f64) -> f64 {
    alpha * (weighted_rssi + access_load) + (1.0 - alpha) * backhaul_load_sum
}

/// Scores `target` for `sta` given the RSSI the STA observes and the
/// channel loads to apply.
pub fn score(
    t: &Topology,
    sta: NodeId,
    target: NodeId,
    rssi_dbm: f64,
    loads: &ChannelLoads,
    alpha: f64,
) -> Result<CandidateScore> {
    let sta_radio = *t
        .node(sta)?
        .access_radio()
        .ok_or_else(|| Error::InvalidParameter(format!("STA {sta} has no radio")))?;
    let target_node = t.node(target)?;
    let target_radio = *target_node
        .access_radio()
        .ok_or_else(|| Error::InvalidParameter(format!("node {target} has no access radio")))?;
    if rssi_dbm < sta_radio.sensitivity_dbm {
        return Err(Error::BelowSensitivity {
            tx: target,
            rx: sta,
            rssi_dbm,
            sensitivity_dbm: sta_radio.sensitivity_dbm,
        });
    }
    let w = weighted_rssi(rssi_dbm, target_radio.tx_power_dbm, sta_radio.sensitivity_dbm)?;
    let access_load = loads.busy_fraction(target_radio.channel);
    let mut backhaul_load_sum = 0.0;
    for link in t.backhaul_path(target)? {
        let ch = t
            .node(link.child)?
            .backhaul_radio()
            .map(|r| r.channel)
            .ok_or_else(|| Error::InvalidParameter(format!("node {} has no backhaul radio", link.child)))?;
        backhaul_load_sum += loads.busy_fraction(ch);
    }
    Ok(CandidateScore {
        sta,
        target,
        rssi_dbm,
        weighted_rssi: w,
        access_load,
        backhaul_load_sum,
        score: decision_metric(alpha, w, access_load, backhaul_load_sum),
    })
}

/// AP/Extenders the STA hears at or above its sensitivity, with RSSIs,
/// ascending node id.
pub fn observe(t: &Topology, env: &Environment, sta: NodeId) -> Result<Vec<(NodeId, f64)>> {
    let s = t
        .node(sta)?
        .access_radio()
        .ok_or_else(|| Error::InvalidParameter(format!("STA {sta} has no radio")))?
        .sensitivity_dbm;
    let mut out = Vec::new();
    for node in t.infrastructure() {
        let rssi = env.radio.link_rssi(t, node.id, sta, Band::Band2G4)?;
        if rssi >= s {
            out.push((node.id, rssi));
        }
    }
    Ok(out)
}

fn tie_key(t: &Topology, tie: TieBreak, id: NodeId) -> (u8, NodeId) {
    match tie {
        TieBreak::ApThenLowerId => {
            let rank = match t.kind(id) {
                Ok(NodeKind::Ap) => 0,
                _ => 1,
            };
            (rank, id)
        }
        TieBreak::LowerId => (0, id),
    }
}

fn sort_entries(t: &Topology, tie: TieBreak, entries: &mut [CandidateEntry]) {
    entries.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then_with(|| tie_key(t, tie, a.target).cmp(&tie_key(t, tie, b.target)))
    });
}

/// Loads seen by `sta` for `candidate`, per the self-load rule.
/// `base` must be the loads with `sta` removed.
fn candidate_loads(
    t: &Topology,
    env: &Environment,
    sta: NodeId,
    candidate: NodeId,
    base: &ChannelLoads,
    self_load: SelfLoad,
) -> Result<ChannelLoads> {
    let mut loads = base.clone();
    if self_load == SelfLoad::Include {
        for (ch, u) in perf::sta_contribution(t, env, sta, candidate)? {
            loads.add(ch, u);
        }
    }
    Ok(loads)
}

/// Ranks the observed targets for `sta`. Loads are taken from
/// `load_state`, which is the current topology or a pass snapshot.
pub fn rank_observed(
    load_state: &Topology,
    env: &Environment,
    sta: NodeId,
    observed: &[(NodeId, f64)],
    cfg: &SelectionConfig,
) -> Result<CandidateList> {
    let mut entries = Vec::with_capacity(observed.len());
    match cfg.mechanism {
        Mechanism::RssiBased => {
            let s = load_state
                .node(sta)?
                .access_radio()
                .ok_or_else(|| Error::InvalidParameter(format!("STA {sta} has no radio")))?
                .sensitivity_dbm;
            for &(target, rssi) in observed {
                let radio = load_state.node(target)?.access_radio().copied().ok_or_else(|| {
                    Error::InvalidParameter(format!("node {target} has no access radio"))
                })?;
                entries.push(CandidateEntry {
                    target,
                    channel: radio.channel,
                    rssi_dbm: rssi,
                    score: weighted_rssi(rssi, radio.tx_power_dbm, s)?,
                });
            }
        }
        Mechanism::LoadAware => {
            let base = perf::channel_loads_without(load_state, env, sta)?;
            for &(target, rssi) in observed {
                let loads = candidate_loads(load_state, env, sta, target, &base, cfg.self_load)?;
                let sc = score(load_state, sta, target, rssi, &loads, cfg.alpha)?;
                entries.push(CandidateEntry {
                    target,
                    channel: load_state.access_channel(target)?,
                    rssi_dbm: rssi,
                    score: sc.score,
                });
            }
        }
    }
    sort_entries(load_state, cfg.tie_break, &mut entries);
    Ok(CandidateList { sta, entries })
}

/// Scores and sorts every in-range AP/Extender for `sta`. Empty when
/// nothing is in range.
pub fn rank_candidates(
    t: &Topology,
    env: &Environment,
    sta: NodeId,
    cfg: &SelectionConfig,
) -> Result<CandidateList> {
    let observed = observe(t, env, sta)?;
    rank_observed(t, env, sta, &observed, cfg)
}

/// Strongest-RSSI target for `sta`, ties broken AP first then lower id.
pub fn best_rssi_target(t: &Topology, env: &Environment, sta: NodeId) -> Result<Option<NodeId>> {
    let list = rank_candidates(t, env, sta, &SelectionConfig::rssi_based())?;
    Ok(list.top().map(|e| e.target))
}

/// Associates every STA to its strongest-RSSI target; STAs with nothing
/// in range stay unassociated.
pub fn initial_association(t: &Topology, env: &Environment) -> Result<Topology> {
    let mut out = t.clone();
    out.associations.clear();
    let stas: Vec<NodeId> = t.stas().map(|n| n.id).collect();
    for sta in stas {
        if let Some(target) = best_rssi_target(&out, env, sta)? {
            out.set_association(sta, target)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub sta: NodeId,
    pub from: NodeId,
    pub to: NodeId,
    pub pass: u32,
}

/// One (or `cfg.passes`) load-balancing pass over the capable STAs in
/// ascending id order. Each STA moves to the top of its candidate list
/// when that differs from its current parent.
pub fn reassociation_pass(
    t: &Topology,
    env: &Environment,
    cfg: &SelectionConfig,
    capable: &BTreeSet<NodeId>,
) -> Result<(Topology, Vec<Move>)> {
    cfg.check()?;
    let mut current = t.clone();
    let mut moves = Vec::new();
    if cfg.mechanism == Mechanism::RssiBased {
        return Ok((current, moves));
    }
    for pass in 0..cfg.passes {
        let snapshot = match cfg.load_refresh {
            LoadRefresh::Snapshot => Some(current.clone()),
            LoadRefresh::PerMove => None,
        };
        for &sta in capable {
            let Some(from) = current.parent_of(sta) else {
                continue;
            };
            let observed = observe(&current, env, sta)?;
            let load_state = snapshot.as_ref().unwrap_or(&current);
            let list = rank_observed(load_state, env, sta, &observed, cfg)?;
            if let Some(top) = list.top() {
                if top.target != from {
                    current.set_association(sta, top.target)?;
                    moves.push(Move {
                        sta,
                        from,
                        to: top.target,
                        pass,
                    });
                }
            }
        }
    }
    Ok((current, moves))
}
