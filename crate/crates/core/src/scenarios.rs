//! Topology generators, seeded STA deployments and the built-in test grids.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Band, BackhaulLink, ChannelId, ExternalLoad, Node, NodeId, NodeKind, Position, RadioConfig,
    Topology, DEFAULT_MAX_CHAIN,
};
use crate::radio::{max_range_m, PropagationParams, RadioEnv};
use crate::selection::{Mechanism, SelectionConfig};

/// Every test places this many STAs.
pub const DEFAULT_N_STA: usize = 10;
/// Default backhaul placement target between neighbouring devices.
pub const DEFAULT_EXTENDER_RSSI_DBM: f64 = -70.0;
/// Seed of the fixed Test 2.4 STA layout.
pub const TEST_2_4_FIXTURE_SEED: u64 = 2404;
pub const BACKHAUL_CHANNEL: ChannelId = ChannelId::g5(36);

const TEST_IDS: [&str; 7] = ["1.1", "1.2", "1.3", "2.1", "2.2", "2.3", "2.4"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TopologyKind {
    Circle0E,
    Circle2E,
    Circle4E,
    Home0E,
    Home1E,
    Home2E,
    Fixture,
}

impl TopologyKind {
    pub fn n_extenders(self) -> usize {
        match self {
            TopologyKind::Circle0E | TopologyKind::Home0E => 0,
            TopologyKind::Home1E | TopologyKind::Fixture => 1,
            TopologyKind::Circle2E | TopologyKind::Home2E => 2,
            TopologyKind::Circle4E => 4,
        }
    }

    pub fn circle(n_ext: usize) -> Result<Self> {
        match n_ext {
            0 => Ok(TopologyKind::Circle0E),
            2 => Ok(TopologyKind::Circle2E),
            4 => Ok(TopologyKind::Circle4E),
            n => Err(Error::InvalidParameter(format!(
                "circular scenario takes 0, 2 or 4 extenders, got {n}"
            ))),
        }
    }

    pub fn home(n_ext: usize) -> Result<Self> {
        match n_ext {
            0 => Ok(TopologyKind::Home0E),
            1 => Ok(TopologyKind::Home1E),
            2 => Ok(TopologyKind::Home2E),
            n => Err(Error::InvalidParameter(format!(
                "home scenario takes 0, 1 or 2 extenders, got {n}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeploymentArea {
    CircleDmax,
    Circle1p2Dmax,
    HomeRect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Radius and angle drawn uniformly.
    #[default]
    UniformRadius,
    /// Uniform over the disc area.
    UniformArea,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelPlan {
    #[default]
    Multi,
    Single,
}

impl ChannelPlan {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelPlan::Multi => "multi",
            ChannelPlan::Single => "single",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomeGeometry {
    pub width_m: f64,
    pub height_m: f64,
    pub ap_x_m: f64,
    pub ap_y_m: f64,
    pub extender_rssi_dbm: f64,
}

impl Default for HomeGeometry {
    fn default() -> Self {
        HomeGeometry {
            width_m: 25.0,
            height_m: 10.0,
            ap_x_m: 3.0,
            ap_y_m: 5.0,
            extender_rssi_dbm: DEFAULT_EXTENDER_RSSI_DBM,
        }
    }
}

impl HomeGeometry {
    pub fn ap(&self) -> Position {
        Position::new(self.ap_x_m, self.ap_y_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub topology_kind: TopologyKind,
    pub n_sta: usize,
    /// 5 GHz RSSI between an Extender and its backhaul parent.
    pub extender_rssi_dbm: f64,
    pub deployment_area: DeploymentArea,
    #[serde(default)]
    pub channel_plan: ChannelPlan,
    pub k: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub home: HomeGeometry,
    /// Fixed STA layout used instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_positions: Option<Vec<Position>>,
    /// Testbed number, for `Fixture` specs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub testbed: Option<u8>,
}

impl ScenarioSpec {
    pub fn n_extenders(&self) -> usize {
        self.topology_kind.n_extenders()
    }

    pub fn check(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let home_kind = matches!(
            self.topology_kind,
            TopologyKind::Home0E | TopologyKind::Home1E | TopologyKind::Home2E
        );
        let circle_kind = matches!(
            self.topology_kind,
            TopologyKind::Circle0E | TopologyKind::Circle2E | TopologyKind::Circle4E
        );
        let area_ok = match self.deployment_area {
            DeploymentArea::HomeRect => home_kind,
            DeploymentArea::CircleDmax | DeploymentArea::Circle1p2Dmax => circle_kind,
        };
        if self.topology_kind != TopologyKind::Fixture && !area_ok {
            return Err(Error::InvalidParameter(format!(
                "deployment area {:?} does not fit topology {:?}",
                self.deployment_area, self.topology_kind
            )));
        }
        if let Some(p) = &self.fixed_positions {
            if p.len() != self.n_sta {
                return Err(Error::InvalidParameter(format!(
                    "{} fixed positions for {} STAs",
                    p.len(),
                    self.n_sta
                )));
            }
        }
        Ok(())
    }
}

/// 2.4 GHz access channels of the AP followed by each Extender.
pub fn access_channels(kind: TopologyKind, plan: ChannelPlan) -> Vec<ChannelId> {
    let n = kind.n_extenders();
    if plan == ChannelPlan::Single {
        return vec![ChannelId::g24(1); n + 1];
    }
    let ext: &[u16] = match kind {
        TopologyKind::Circle2E => &[6, 6],
        TopologyKind::Circle4E => &[6, 6, 11, 11],
        TopologyKind::Home1E | TopologyKind::Fixture => &[6],
        TopologyKind::Home2E => &[6, 11],
        TopologyKind::Circle0E | TopologyKind::Home0E => &[],
    };
    std::iter::once(1).chain(ext.iter().copied()).map(ChannelId::g24).collect()
}

fn infra(id: u32, kind: NodeKind, pos: Position, access: ChannelId) -> Node {
    Node::infrastructure(NodeId(id), kind, pos, access, BACKHAUL_CHANNEL)
}

/// Distance at which a default 5 GHz radio is received at `rssi_dbm`.
pub fn extender_distance_m(rssi_dbm: f64, p: &PropagationParams) -> Result<f64> {
    max_range_m(&RadioConfig::standard(BACKHAUL_CHANNEL), rssi_dbm, p)
}

/// AP 2.4 GHz coverage radius at the default sensitivity.
pub fn d_max_m(p: &PropagationParams) -> Result<f64> {
    let r = RadioConfig::standard(ChannelId::g24(1));
    max_range_m(&r, r.sensitivity_dbm, p)
}

/// Circular scenario: AP at the origin, Extenders on the axes at the
/// distance where their 5 GHz link to the AP is received at `rssi_ap_e`.
/// Order is +x, -x, +y, -y.
pub fn gen_circle(
    n_ext: usize,
    rssi_ap_e: f64,
    plan: ChannelPlan,
    p: &PropagationParams,
) -> Result<Topology> {
    let kind = TopologyKind::circle(n_ext)?;
    let s = RadioConfig::standard(BACKHAUL_CHANNEL).sensitivity_dbm;
    if n_ext > 0 && !(s..=-50.0).contains(&rssi_ap_e) {
        return Err(Error::InvalidParameter(format!(
            "AP-Extender RSSI must be in [{s}, -50] dBm, got {rssi_ap_e}"
        )));
    }
    let channels = access_channels(kind, plan);
    let mut t = Topology::new(DEFAULT_MAX_CHAIN);
    t.add_node(infra(0, NodeKind::Ap, Position::new(0.0, 0.0), channels[0]));
    if n_ext > 0 {
        let d = extender_distance_m(rssi_ap_e, p)?;
        let dirs = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
        for i in 0..n_ext {
            let (dx, dy) = dirs[i];
            let id = i as u32 + 1;
            t.add_node(infra(id, NodeKind::Extender, Position::new(d * dx, d * dy), channels[i + 1]));
            t.backhaul_parent.insert(NodeId(id), NodeId::AP);
        }
    }
    Ok(t)
}

/// Home scenario: AP inside the rectangle, Extenders chained along +x,
/// each received by its parent at `geom.extender_rssi_dbm` on 5 GHz.
pub fn gen_home(
    n_ext: usize,
    plan: ChannelPlan,
    geom: &HomeGeometry,
    p: &PropagationParams,
) -> Result<Topology> {
    let kind = TopologyKind::home(n_ext)?;
    let channels = access_channels(kind, plan);
    let mut t = Topology::new(DEFAULT_MAX_CHAIN);
    let ap = geom.ap();
    t.add_node(infra(0, NodeKind::Ap, ap, channels[0]));
    if n_ext > 0 {
        let d = extender_distance_m(geom.extender_rssi_dbm, p)?;
        for i in 0..n_ext {
            let id = i as u32 + 1;
            let pos = Position::new(ap.x + d * (i + 1) as f64, ap.y);
            t.add_node(infra(id, NodeKind::Extender, pos, channels[i + 1]));
            t.backhaul_parent.insert(NodeId(id), NodeId(id - 1));
        }
    }
    Ok(t)
}

/// RNG of one deployment: the sweep seed with the deployment index as
/// stream, so each index is independent of every other.
pub fn deployment_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn sample_disc<R: Rng>(rng: &mut R, radius: f64, sampling: Sampling) -> Position {
    let u: f64 = rng.random();
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    let r = match sampling {
        Sampling::UniformRadius => radius * u,
        Sampling::UniformArea => radius * u.sqrt(),
    };
    Position::new(r * theta.cos(), r * theta.sin())
}

fn draw_positions<R: Rng>(spec: &ScenarioSpec, rng: &mut R, p: &PropagationParams) -> Result<Vec<Position>> {
    if let Some(fixed) = &spec.fixed_positions {
        return Ok(fixed.clone());
    }
    let mut out = Vec::with_capacity(spec.n_sta);
    match spec.deployment_area {
        DeploymentArea::CircleDmax | DeploymentArea::Circle1p2Dmax => {
            let scale = if spec.deployment_area == DeploymentArea::CircleDmax { 1.0 } else { 1.2 };
            let radius = scale * d_max_m(p)?;
            for _ in 0..spec.n_sta {
                out.push(sample_disc(rng, radius, spec.sampling));
            }
        }
        DeploymentArea::HomeRect => {
            for _ in 0..spec.n_sta {
                let x = rng.random::<f64>() * spec.home.width_m;
                let y = rng.random::<f64>() * spec.home.height_m;
                out.push(Position::new(x, y));
            }
        }
    }
    Ok(out)
}

/// STA positions of deployment `index`.
pub fn sample_deployment(spec: &ScenarioSpec, index: u64, p: &PropagationParams) -> Result<Vec<Position>> {
    let mut rng = deployment_rng(spec.seed, index);
    draw_positions(spec, &mut rng, p)
}

/// `round(beta·n/100)` distinct indices in `0..n`.
pub fn sample_capable<R: Rng>(rng: &mut R, n: usize, beta_pct: f64) -> BTreeSet<usize> {
    let count = ((beta_pct * n as f64 / 100.0).round() as usize).min(n);
    sample(rng, n, count).into_iter().collect()
}

/// One RSSI pinned regardless of geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiOverride {
    pub a: NodeId,
    pub b: NodeId,
    pub band: Band,
    pub rssi_dbm: f64,
}

/// An explicit topology from a config file. Its associations are
/// ignored by runs, which always start from initial association.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitScenario {
    pub topology: Topology,
    #[serde(default)]
    pub rssi_overrides: Vec<RssiOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Spec(ScenarioSpec),
    Explicit(ExplicitScenario),
}

impl Scenario {
    pub fn k(&self) -> usize {
        match self {
            Scenario::Spec(s) => s.k,
            Scenario::Explicit(_) => 1,
        }
    }

    pub fn n_extenders(&self) -> usize {
        match self {
            Scenario::Spec(s) => s.n_extenders(),
            Scenario::Explicit(e) => e.topology.extenders().count(),
        }
    }

    pub fn channel_plan(&self) -> Option<ChannelPlan> {
        match self {
            Scenario::Spec(s) => Some(s.channel_plan),
            Scenario::Explicit(_) => None,
        }
    }
}

/// Unassociated topology of one deployment plus its RSSI overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub topology: Topology,
    pub rssi_overrides: Vec<RssiOverride>,
    pub capable: BTreeSet<NodeId>,
}

impl Deployment {
    pub fn radio_env(&self, base: &RadioEnv) -> RadioEnv {
        let mut env = base.clone();
        for o in &self.rssi_overrides {
            env.set_override(o.a, o.b, o.band, o.rssi_dbm);
        }
        env
    }

    pub fn stas(&self) -> Vec<NodeId> {
        self.topology.stas().map(|n| n.id).collect()
    }
}

/// Infrastructure of a spec, without STAs.
pub fn spec_infrastructure(spec: &ScenarioSpec, p: &PropagationParams) -> Result<Topology> {
    let n = spec.n_extenders();
    match spec.topology_kind {
        TopologyKind::Circle0E | TopologyKind::Circle2E | TopologyKind::Circle4E => {
            gen_circle(n, spec.extender_rssi_dbm, spec.channel_plan, p)
        }
        TopologyKind::Home0E | TopologyKind::Home1E | TopologyKind::Home2E => {
            let geom = HomeGeometry {
                extender_rssi_dbm: spec.extender_rssi_dbm,
                ..spec.home
            };
            gen_home(n, spec.channel_plan, &geom, p)
        }
        TopologyKind::Fixture => {
            let f = testbed_fixture();
            let mut t = f.topology(spec.testbed.unwrap_or(2), true)?;
            let stas: Vec<NodeId> = t.stas().map(|s| s.id).collect();
            for s in stas {
                t.nodes.remove(&s);
            }
            Ok(t)
        }
    }
}

/// Builds deployment `index`: positions are drawn first, then the
/// capable set from the same stream.
pub fn build_deployment(
    scenario: &Scenario,
    index: u64,
    beta_pct: f64,
    p: &PropagationParams,
) -> Result<Deployment> {
    match scenario {
        Scenario::Spec(spec) => {
            let mut rng = deployment_rng(spec.seed, index);
            let mut t = spec_infrastructure(spec, p)?;
            let mut overrides = Vec::new();
            let ids: Vec<NodeId>;
            if spec.topology_kind == TopologyKind::Fixture {
                let f = testbed_fixture();
                let full = f.topology(spec.testbed.unwrap_or(2), true)?;
                ids = full.stas().map(|n| n.id).collect();
                for n in full.stas() {
                    t.add_node(n.clone());
                }
                overrides = f.overrides(&ids);
            } else {
                let positions = draw_positions(spec, &mut rng, p)?;
                let first = t.next_id().0;
                ids = (0..positions.len()).map(|i| NodeId(first + i as u32)).collect();
                for (id, pos) in ids.iter().zip(&positions) {
                    t.add_node(Node::sta(*id, *pos, false));
                }
            }
            let capable = mark_capable(&mut t, &ids, &mut rng, beta_pct);
            Ok(Deployment {
                topology: t,
                rssi_overrides: overrides,
                capable,
            })
        }
        Scenario::Explicit(e) => {
            let mut rng = deployment_rng(0, index);
            let mut t = e.topology.clone();
            t.associations.clear();
            let ids: Vec<NodeId> = t.stas().map(|n| n.id).collect();
            let capable = mark_capable(&mut t, &ids, &mut rng, beta_pct);
            Ok(Deployment {
                topology: t,
                rssi_overrides: e.rssi_overrides.clone(),
                capable,
            })
        }
    }
}

fn mark_capable<R: Rng>(t: &mut Topology, ids: &[NodeId], rng: &mut R, beta_pct: f64) -> BTreeSet<NodeId> {
    let picked: BTreeSet<NodeId> = sample_capable(rng, ids.len(), beta_pct)
        .into_iter()
        .map(|i| ids[i])
        .collect();
    for id in ids {
        if let Some(n) = t.nodes.get_mut(id) {
            n.supports_11kv = picked.contains(id);
        }
    }
    picked
}

/// Measured RSSI testbed with one AP (id 0) and one Extender (id 1).
/// STA #n has id `n + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    /// STA number to (RSSI from AP, RSSI from Extender).
    pub rssi_matrix: BTreeMap<u8, (f64, f64)>,
    pub backhaul_rssi_dbm: f64,
    pub expected: Vec<ExpectedColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedColumn {
    pub testbed: u8,
    pub with_extender: bool,
    pub mechanism: Mechanism,
    pub b_t_bps: Option<f64>,
    /// STA number to parent id.
    pub associations: BTreeMap<u8, NodeId>,
}

pub const FIXTURE_EXTENDER: NodeId = NodeId(1);

pub fn fixture_sta_id(n: u8) -> NodeId {
    NodeId(1 + u32::from(n))
}

impl Fixture {
    pub fn testbed_stas(testbed: u8) -> Result<Vec<u8>> {
        match testbed {
            1 => Ok(vec![1, 2, 3, 4, 5]),
            2 => Ok(vec![1, 2, 3, 6, 7]),
            n => Err(Error::InvalidParameter(format!("no testbed #{n}"))),
        }
    }

    /// Testbed topology with unassociated STAs. Positions are
    /// placeholders; every link used is pinned by an override.
    pub fn topology(&self, testbed: u8, with_extender: bool) -> Result<Topology> {
        let mut t = Topology::new(DEFAULT_MAX_CHAIN);
        t.add_node(infra(0, NodeKind::Ap, Position::new(0.0, 0.0), ChannelId::g24(1)));
        if with_extender {
            t.add_node(infra(1, NodeKind::Extender, Position::new(20.0, 0.0), ChannelId::g24(6)));
            t.backhaul_parent.insert(FIXTURE_EXTENDER, NodeId::AP);
        }
        for n in Fixture::testbed_stas(testbed)? {
            t.add_node(Node::sta(fixture_sta_id(n), Position::new(10.0, 0.0), true));
        }
        Ok(t)
    }

    pub fn overrides(&self, stas: &[NodeId]) -> Vec<RssiOverride> {
        let mut out = vec![RssiOverride {
            a: FIXTURE_EXTENDER,
            b: NodeId::AP,
            band: Band::Band5G,
            rssi_dbm: self.backhaul_rssi_dbm,
        }];
        for (&n, &(ap, e)) in &self.rssi_matrix {
            let id = fixture_sta_id(n);
            if !stas.contains(&id) {
                continue;
            }
            out.push(RssiOverride { a: id, b: NodeId::AP, band: Band::Band2G4, rssi_dbm: ap });
            out.push(RssiOverride { a: id, b: FIXTURE_EXTENDER, band: Band::Band2G4, rssi_dbm: e });
        }
        out
    }

    pub fn radio_env(&self, base: &RadioEnv, t: &Topology) -> RadioEnv {
        let stas: Vec<NodeId> = t.stas().map(|n| n.id).collect();
        let mut env = base.clone();
        for o in self.overrides(&stas) {
            env.set_override(o.a, o.b, o.band, o.rssi_dbm);
        }
        env
    }
}

pub fn testbed_fixture() -> Fixture {
    let rssi_matrix: BTreeMap<u8, (f64, f64)> = [
        (1, (-43.0, -66.0)),
        (2, (-31.0, -69.0)),
        (3, (-38.0, -67.0)),
        (4, (-59.0, -41.0)),
        (5, (-65.0, -35.0)),
        (6, (-41.0, -51.0)),
        (7, (-46.0, -52.0)),
    ]
    .into_iter()
    .collect();
    let ap = NodeId::AP;
    let e = FIXTURE_EXTENDER;
    let col = |testbed, with_extender, mechanism, b_t: Option<f64>, parents: &[(u8, NodeId)]| ExpectedColumn {
        testbed,
        with_extender,
        mechanism,
        b_t_bps: b_t.map(|m| m * 1e6),
        associations: parents.iter().copied().collect(),
    };
    let rssi = Mechanism::RssiBased;
    let la = Mechanism::LoadAware;
    let expected = vec![
        col(1, false, rssi, None, &[(1, ap), (2, ap), (3, ap), (4, ap), (5, ap)]),
        col(1, true, rssi, None, &[(1, ap), (2, ap), (3, ap), (4, e), (5, e)]),
        col(2, true, rssi, None, &[(1, ap), (2, ap), (3, ap), (6, ap), (7, ap)]),
        col(2, true, la, Some(5.0), &[(1, ap), (2, ap), (3, ap), (6, ap), (7, e)]),
        col(2, true, la, Some(37.5), &[(1, ap), (2, ap), (3, e), (6, ap), (7, e)]),
        col(2, true, la, Some(50.0), &[(1, ap), (2, ap), (3, e), (6, ap), (7, e)]),
        col(2, true, la, Some(75.0), &[(1, ap), (2, ap), (3, e), (6, ap), (7, e)]),
        col(2, true, la, Some(100.0), &[(1, ap), (2, e), (3, ap), (6, ap), (7, ap)]),
    ];
    Fixture {
        rssi_matrix,
        backhaul_rssi_dbm: DEFAULT_EXTENDER_RSSI_DBM,
        expected,
    }
}

/// Fixed Test 2.4 layout: the first half of the STAs lands nearer the
/// AP than the Extender, the rest nearer the Extender. The split is the
/// AP-Extender midpoint, clipped to the home.
pub fn test_2_4_positions(
    geom: &HomeGeometry,
    p: &PropagationParams,
    n_sta: usize,
    seed: u64,
) -> Result<Vec<Position>> {
    let e_x = geom.ap_x_m + extender_distance_m(geom.extender_rssi_dbm, p)?;
    let split = (0.5 * (geom.ap_x_m + e_x)).min(geom.width_m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_sta)
        .map(|i| {
            let (x0, x1) = if i < n_sta / 2 { (0.0, split) } else { (split, geom.width_m) };
            let x = x0 + rng.random::<f64>() * (x1 - x0);
            let y = rng.random::<f64>() * geom.height_m;
            Position::new(x, y)
        })
        .collect())
}

/// Swept parameters that identify a point in CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub n_ext: usize,
    pub channel_plan: Option<ChannelPlan>,
    pub rssi_ap_e: Option<f64>,
    pub b_ext_bps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub test_id: String,
    pub scenario: Scenario,
    pub selection: SelectionConfig,
    pub per_sta_load_bps: f64,
    pub n_sta: usize,
    pub external: Vec<ExternalLoad>,
    pub params: SweepParams,
}

impl SweepPoint {
    pub fn b_t_bps(&self) -> f64 {
        self.per_sta_load_bps * self.n_sta as f64
    }
}

/// Knobs shared by every built-in grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDefaults {
    pub seed: u64,
    pub sampling: Sampling,
    pub home: HomeGeometry,
    pub fixture_seed: u64,
    pub propagation: PropagationParams,
}

impl Default for GridDefaults {
    fn default() -> Self {
        GridDefaults {
            seed: 1,
            sampling: Sampling::default(),
            home: HomeGeometry::default(),
            fixture_seed: TEST_2_4_FIXTURE_SEED,
            propagation: PropagationParams::default(),
        }
    }
}

pub fn test_ids() -> &'static [&'static str] {
    &TEST_IDS
}

/// `n` values `step, 2·step, ..., n·step`, computed by multiplication
/// so they carry no accumulated rounding.
fn grid(step: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 * step).collect()
}

struct PointBuilder<'a> {
    test_id: &'a str,
    d: &'a GridDefaults,
}

impl PointBuilder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn point(
        &self,
        kind: TopologyKind,
        area: DeploymentArea,
        plan: ChannelPlan,
        rssi_ap_e: Option<f64>,
        k: usize,
        selection: SelectionConfig,
        b_sta_bps: f64,
        external: Vec<ExternalLoad>,
        fixed_positions: Option<Vec<Position>>,
    ) -> SweepPoint {
        let n_ext = kind.n_extenders();
        let spec = ScenarioSpec {
            name: format!("test-{}", self.test_id),
            topology_kind: kind,
            n_sta: DEFAULT_N_STA,
            extender_rssi_dbm: rssi_ap_e.unwrap_or(DEFAULT_EXTENDER_RSSI_DBM),
            deployment_area: area,
            channel_plan: plan,
            k,
            seed: self.d.seed,
            sampling: self.d.sampling,
            home: self.d.home,
            fixed_positions,
            testbed: None,
        };
        let b_ext_bps = external.first().map(|e| e.load_bps);
        SweepPoint {
            test_id: self.test_id.to_string(),
            scenario: Scenario::Spec(spec),
            selection,
            per_sta_load_bps: b_sta_bps,
            n_sta: DEFAULT_N_STA,
            external,
            params: SweepParams {
                n_ext,
                channel_plan: Some(plan),
                rssi_ap_e: if n_ext > 0 { rssi_ap_e } else { None },
                b_ext_bps,
            },
        }
    }
}

/// Expands a built-in test into its parameter grid, in output order.
pub fn build_test(test_id: &str, d: &GridDefaults) -> Result<Vec<SweepPoint>> {
    let b = PointBuilder { test_id, d };
    let rssi = SelectionConfig::rssi_based();
    let la = SelectionConfig::load_aware(0.5, 100.0);
    let multi = ChannelPlan::Multi;
    let single = ChannelPlan::Single;
    let mut out = Vec::new();
    match test_id {
        "1.1" => {
            let area = DeploymentArea::CircleDmax;
            out.push(b.point(TopologyKind::Circle0E, area, multi, None, 1000, rssi, 2.4e6, vec![], None));
            for plan in [multi, single] {
                for sel in [rssi, la] {
                    for step in 0..=40 {
                        let r = -50.0 - f64::from(step);
                        out.push(b.point(TopologyKind::Circle4E, area, plan, Some(r), 1000, sel, 2.4e6, vec![], None));
                    }
                }
            }
        }
        "1.2" => {
            let area = DeploymentArea::Circle1p2Dmax;
            let r = Some(DEFAULT_EXTENDER_RSSI_DBM);
            for (n, sel) in [(0, rssi), (2, rssi), (4, rssi), (2, la), (4, la)] {
                out.push(b.point(TopologyKind::circle(n)?, area, multi, r, 10_000, sel, 2.4e6, vec![], None));
            }
        }
        "1.3" => {
            let area = DeploymentArea::CircleDmax;
            let r = Some(DEFAULT_EXTENDER_RSSI_DBM);
            for (n, sel) in [(0, rssi), (2, rssi), (4, rssi), (2, la), (4, la)] {
                for b_sta in grid(12e3, 300) {
                    out.push(b.point(TopologyKind::circle(n)?, area, multi, r, 1000, sel, b_sta, vec![], None));
                }
            }
        }
        "2.1" => {
            let area = DeploymentArea::HomeRect;
            let r = Some(d.home.extender_rssi_dbm);
            let combos = [
                (0, multi, rssi),
                (1, multi, rssi),
                (2, multi, rssi),
                (1, multi, la),
                (2, multi, la),
                (1, single, rssi),
                (2, single, rssi),
                (1, single, la),
                (2, single, la),
            ];
            for (n, plan, sel) in combos {
                for b_sta in grid(12e3, 500) {
                    out.push(b.point(TopologyKind::home(n)?, area, plan, r, 1000, sel, b_sta, vec![], None));
                }
            }
        }
        "2.2" | "2.3" => {
            let area = DeploymentArea::HomeRect;
            let r = Some(d.home.extender_rssi_dbm);
            let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
            for plan in [multi, single] {
                for b_sta in [1.8e6, 3.0e6, 4.2e6, 5.4e6] {
                    for l in levels {
                        let sel = if test_id == "2.2" {
                            SelectionConfig::load_aware(l, 100.0)
                        } else {
                            SelectionConfig::load_aware(0.5, l * 100.0)
                        };
                        out.push(b.point(TopologyKind::Home2E, area, plan, r, 1000, sel, b_sta, vec![], None));
                    }
                }
            }
        }
        "2.4" => {
            let area = DeploymentArea::HomeRect;
            let r = Some(d.home.extender_rssi_dbm);
            let pos = test_2_4_positions(&d.home, &d.propagation, DEFAULT_N_STA, d.fixture_seed)?;
            let ext_channel = access_channels(TopologyKind::Home1E, multi)[1];
            let combos = [
                (0, rssi),
                (1, rssi),
                (1, SelectionConfig::load_aware(0.5, 100.0)),
                (1, SelectionConfig::load_aware(0.75, 100.0)),
                (1, SelectionConfig::load_aware(1.0, 100.0)),
            ];
            for (n, sel) in combos {
                for step in 0..=48 {
                    let b_ext = f64::from(step) * 0.25e6;
                    let ext = vec![ExternalLoad::new(ext_channel, b_ext, ExternalLoad::DEFAULT_PHY_RATE_BPS)?];
                    out.push(b.point(TopologyKind::home(n)?, area, multi, r, 1, sel, 4.32e6, ext, Some(pos.clone())));
                }
            }
        }
        other => return Err(Error::UnknownTest(other.to_string())),
    }
    Ok(out)
}

/// Checked-in point counts of every built-in grid.
pub const GRID_MANIFEST: &str = include_str!("../data/grid_manifest.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub test_id: String,
    pub points: usize,
    pub k: usize,
    pub description: String,
}

pub fn grid_manifest() -> Result<Vec<ManifestEntry>> {
    serde_json::from_str(GRID_MANIFEST).map_err(|e| Error::Config(format!("grid manifest: {e}")))
}

/// Backhaul links of a topology, for display.
pub fn backhaul_links(t: &Topology) -> Vec<BackhaulLink> {
    t.backhaul_parent
        .iter()
        .map(|(&child, &parent)| BackhaulLink { child, parent })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::rssi_dbm;

    fn p() -> PropagationParams {
        PropagationParams::default()
    }

    #[test]
    fn circle_extenders_sit_on_the_placement_rssi() {
        let t = gen_circle(4, -70.0, ChannelPlan::Multi, &p()).unwrap();
        assert!(t.validate().is_empty());
        let ap = t.node(NodeId::AP).unwrap();
        for e in t.extenders() {
            let r = rssi_dbm(e.backhaul_radio().unwrap(), e.position, ap.position, &p()).unwrap();
            assert!((r + 70.0).abs() < 0.01);
            // oracle: 10^(44.021/31)
            assert!((e.position.distance(&ap.position) - 26.303_851_985_165_995).abs() < 1e-6);
        }
        let chans: Vec<u16> = t.infrastructure().map(|n| n.access_radio().unwrap().channel.number).collect();
        assert_eq!(chans, vec![1, 6, 6, 11, 11]);
    }

    #[test]
    fn circle_at_sensitivity_edge() {
        let t = gen_circle(2, -90.0, ChannelPlan::Single, &p()).unwrap();
        let e = t.node(NodeId(1)).unwrap();
        assert!((e.position.x - 116.193_181_238_853_4).abs() < 1e-6);
        assert!(gen_circle(2, -95.0, ChannelPlan::Single, &p()).is_err());
        assert_eq!(gen_circle(0, -70.0, ChannelPlan::Multi, &p()).unwrap().nodes.len(), 1);
    }

    #[test]
    fn home_chain() {
        let t = gen_home(2, ChannelPlan::Multi, &HomeGeometry::default(), &p()).unwrap();
        assert!(t.validate().is_empty());
        assert_eq!(t.backhaul_path(NodeId(2)).unwrap().len(), 2);
        let one = gen_home(1, ChannelPlan::Multi, &HomeGeometry::default(), &p()).unwrap();
        assert_eq!(one.access_channel(NodeId(0)).unwrap(), ChannelId::g24(1));
        assert_eq!(one.access_channel(NodeId(1)).unwrap(), ChannelId::g24(6));
    }

    #[test]
    fn capable_count_rounds() {
        let mut rng = deployment_rng(3, 0);
        assert_eq!(sample_capable(&mut rng, 10, 25.0).len(), 3);
        assert_eq!(sample_capable(&mut rng, 10, 0.0).len(), 0);
        assert_eq!(sample_capable(&mut rng, 10, 100.0).len(), 10);
    }

    #[test]
    fn grid_lengths_match_manifest() {
        let d = GridDefaults::default();
        for m in grid_manifest().unwrap() {
            let pts = build_test(&m.test_id, &d).unwrap();
            assert_eq!(pts.len(), m.points, "test {}", m.test_id);
            assert!(pts.iter().all(|p| p.scenario.k() == m.k));
        }
        assert!(build_test("3.1", &d).is_err());
    }

    #[test]
    fn grids_hit_the_published_loads() {
        let d = GridDefaults::default();
        let t13 = build_test("1.3", &d).unwrap();
        assert!((t13[0].per_sta_load_bps - 12e3).abs() < 1e-9);
        assert!((t13[299].per_sta_load_bps - 3.6e6).abs() < 1e-6);
        let t22 = build_test("2.2", &d).unwrap();
        let mut bt: Vec<f64> = t22.iter().map(|p| p.b_t_bps()).collect();
        bt.dedup();
        bt.sort_by(f64::total_cmp);
        bt.dedup();
        assert_eq!(bt.len(), 4);
        assert!((bt[0] - 18e6).abs() < 1e-6 && (bt[3] - 54e6).abs() < 1e-6);
        let t24 = build_test("2.4", &d).unwrap();
        assert!(t24.iter().all(|p| p.per_sta_load_bps == 4.32e6));
        assert!(t24.iter().all(|p| p.external[0].channel == ChannelId::g24(6)));
    }

    #[test]
    fn fixture_rows() {
        let f = testbed_fixture();
        assert_eq!(f.rssi_matrix[&4], (-59.0, -41.0));
        let t = f.topology(2, true).unwrap();
        let ids: Vec<u32> = t.stas().map(|n| n.id.0).collect();
        assert_eq!(ids, vec![2, 3, 4, 7, 8]);
    }

    #[test]
    fn test_2_4_halves_split_at_the_midpoint() {
        let geom = HomeGeometry::default();
        let pos = test_2_4_positions(&geom, &p(), 10, 7).unwrap();
        let t = gen_home(1, ChannelPlan::Multi, &geom, &p()).unwrap();
        let ap = t.node(NodeId::AP).unwrap().position;
        let e = t.node(NodeId(1)).unwrap().position;
        for (i, q) in pos.iter().enumerate() {
            assert!(q.x >= 0.0 && q.x <= geom.width_m && q.y >= 0.0 && q.y <= geom.height_m);
            let nearer_e = q.distance(&e) < q.distance(&ap);
            assert_eq!(nearer_e, i >= 5, "STA {i} at {q:?}");
        }
        assert_eq!(pos, test_2_4_positions(&geom, &p(), 10, 7).unwrap());
    }
}
