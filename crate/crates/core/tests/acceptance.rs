//! Acceptance checks. Every test writes one `PASS`/`FAIL` line straight
//! to stderr, so the verdicts show up even when output is captured.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homewifi_core::config::Config;
use homewifi_core::model::{
    Band, ChannelId, Node, NodeId, NodeKind, Position, RadioConfig, Topology, TrafficProfile,
};
use homewifi_core::perf::{self, Environment, MacParams};
use homewifi_core::protocol::{self, MeasurementMode};
use homewifi_core::radio::{max_range_m, PropagationParams, RadioEnv};
use homewifi_core::runner::{self, Criterion, Overrides, RunConfig};
use homewifi_core::scenarios::{
    self, fixture_sta_id, testbed_fixture, ChannelPlan, Fixture, FIXTURE_EXTENDER,
};
use homewifi_core::selection::{self, Mechanism, SelectionConfig, SelfLoad};

fn verdict(n: u32, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "[acceptance] {tag} criterion {n:>2}: {detail}");
}

fn check(n: u32, ok: bool, detail: String) {
    verdict(n, ok, &detail);
    assert!(ok, "criterion {n}: {detail}");
}

fn env_for(t: &Topology, radio: RadioEnv, per_sta_bps: f64) -> Environment {
    Environment {
        radio,
        mac: MacParams::default(),
        traffic: TrafficProfile::new(12_000.0, per_sta_bps, t.stas().count()).unwrap(),
        external: vec![],
    }
}

#[test]
fn c01_association_rates_match_reference() {
    let start = Instant::now();
    let cfg = RunConfig::for_test("1.2", Config::builtin(), &Overrides::default()).unwrap();
    let aggs = runner::run_aggregates(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let reference: BTreeMap<usize, f64> = [(0, 83.489), (2, 90.330), (4, 93.432)].into_iter().collect();
    let mut ok = secs < 30.0;
    let mut parts = Vec::new();
    for a in &aggs {
        let target = reference[&a.params.n_ext];
        let within = (a.association_pct - target).abs() <= 1.0;
        ok &= within && a.k == 10_000;
        parts.push(format!(
            "{}E {} {:.3}% (reference {target}%)",
            a.params.n_ext,
            a.mechanism.as_str(),
            a.association_pct
        ));
    }
    for n in [2, 4] {
        let rates: Vec<f64> = aggs
            .iter()
            .filter(|a| a.params.n_ext == n)
            .map(|a| a.association_pct)
            .collect();
        ok &= rates.len() == 2 && rates[0] == rates[1];
    }
    check(
        1,
        ok,
        format!("Test 1.2 k=10000: {}; mechanisms equal; {secs:.1} s", parts.join(", ")),
    );
}

#[test]
fn c02_weighted_rssi_exact() {
    let mid = selection::weighted_rssi(-35.0, 20.0, -90.0).unwrap();
    let top = selection::weighted_rssi(20.0, 20.0, -90.0).unwrap();
    let bottom = selection::weighted_rssi(-90.0, 20.0, -90.0).unwrap();
    check(
        2,
        mid == 0.5 && top == 0.0 && bottom == 1.0,
        format!("RSSI*(-35) = {mid}, RSSI*(P_t) = {top}, RSSI*(S) = {bottom}"),
    );
}

fn random_topology(rng: &mut ChaCha8Rng) -> Topology {
    let mut t = Topology::new(2);
    let ch = |rng: &mut ChaCha8Rng| ChannelId::g24([1, 6, 11][rng.random_range(0..3)]);
    t.add_node(Node::infrastructure(
        NodeId(0),
        NodeKind::Ap,
        Position::new(0.0, 0.0),
        ch(rng),
        ChannelId::g5(36),
    ));
    let n_ext = rng.random_range(0..=2u32);
    for i in 1..=n_ext {
        let pos = Position::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
        t.add_node(Node::infrastructure(NodeId(i), NodeKind::Extender, pos, ch(rng), ChannelId::g5(36)));
        let parent = if i == 2 && rng.random_bool(0.5) { NodeId(1) } else { NodeId(0) };
        t.backhaul_parent.insert(NodeId(i), parent);
    }
    let n_sta = rng.random_range(1..=6u32);
    for j in 0..n_sta {
        let pos = Position::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0));
        t.add_node(Node::sta(NodeId(n_ext + 1 + j), pos, true));
    }
    t
}

#[test]
fn c03_metric_recomposes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut n = 0;
    let mut worst: f64 = 0.0;
    while n < 1000 {
        let t = random_topology(&mut rng);
        let env = env_for(&t, RadioEnv::default(), rng.random_range(0.0..8e6));
        let initial = selection::initial_association(&t, &env).unwrap();
        let loads = perf::channel_loads(&initial, &env).unwrap();
        let alpha = rng.random_range(0.0..=1.0);
        for sta in initial.stas().map(|s| s.id).collect::<Vec<_>>() {
            for (target, rssi) in selection::observe(&initial, &env, sta).unwrap() {
                let s = selection::score(&initial, sta, target, rssi, &loads, alpha).unwrap();
                let y = alpha * (s.weighted_rssi + s.access_load) + (1.0 - alpha) * s.backhaul_load_sum;
                worst = worst.max((y - s.score).abs());
                n += 1;
            }
        }
    }
    check(3, worst <= 1e-12, format!("{n} scores, max recomposition error {worst:e}"));
}

#[test]
fn c04_range_constants() {
    let p = PropagationParams::default();
    let d24 = max_range_m(&RadioConfig::standard(ChannelId::g24(1)), -90.0, &p).unwrap();
    let d5 = max_range_m(&RadioConfig::standard(ChannelId::g5(36)), -70.0, &p).unwrap();
    check(
        4,
        (186.0..=187.0).contains(&d24) && (26.0..=27.0).contains(&d5),
        format!("D_max(2.4 GHz, -90 dBm) = {d24:.4} m, d(5 GHz, -70 dBm) = {d5:.4} m"),
    );
}

#[test]
fn c05_mcs_anchor() {
    let t = Config::builtin().mcs_tables.for_band(Band::Band5G);
    let got = t.mcs_for_rssi(-77.0, 2);
    check(5, matches!(got, Some((1, _))), format!("5 GHz table at -77 dBm -> {got:?}"));
}

fn spec_deployments(test: &str, pick: impl Fn(&scenarios::SweepPoint) -> bool) -> scenarios::SweepPoint {
    let pts = scenarios::build_test(test, &Config::builtin().grid_defaults()).unwrap();
    pts.into_iter().find(|p| pick(p)).expect("grid point")
}

#[test]
fn c06_equivalences() {
    let config = Config::builtin();
    let p = &config.propagation;
    let mut beta0 = 0;
    let mut argmax = 0;
    let mut composed = 0;
    let mut mismatches = Vec::new();

    // beta = 0: load-aware leaves the RSSI-based topology untouched
    let points = [
        spec_deployments("1.3", |p| p.params.n_ext == 4 && p.per_sta_load_bps > 3.0e6),
        spec_deployments("2.1", |p| p.params.n_ext == 2 && p.per_sta_load_bps > 4.0e6),
    ];
    for point in &points {
        for d in 0..200 {
            let dep = scenarios::build_deployment(&point.scenario, d, 0.0, p).unwrap();
            let env = env_for(&dep.topology, dep.radio_env(&config.radio_env()), point.per_sta_load_bps);
            let rssi = selection::initial_association(&dep.topology, &env).unwrap();
            let (la, moves) =
                selection::reassociation_pass(&rssi, &env, &SelectionConfig::load_aware(0.5, 0.0), &dep.capable)
                    .unwrap();
            if la != rssi || !moves.is_empty() {
                mismatches.push(format!("beta0 d{d}"));
            }
            beta0 += 1;
        }
    }

    // alpha = 1 on one access channel: top candidate is the strongest
    let single = [
        spec_deployments("1.1", |p| {
            p.params.channel_plan == Some(ChannelPlan::Single) && p.params.rssi_ap_e == Some(-60.0)
        }),
        spec_deployments("2.1", |p| {
            p.params.channel_plan == Some(ChannelPlan::Single) && p.params.n_ext == 2 && p.per_sta_load_bps > 3.0e6
        }),
    ];
    for point in &single {
        for d in 0..200 {
            let dep = scenarios::build_deployment(&point.scenario, d, 100.0, p).unwrap();
            let env = env_for(&dep.topology, dep.radio_env(&config.radio_env()), point.per_sta_load_bps);
            let t = selection::initial_association(&dep.topology, &env).unwrap();
            for sta in dep.stas() {
                let best = selection::best_rssi_target(&t, &env, sta).unwrap();
                for self_load in [SelfLoad::Include, SelfLoad::Exclude] {
                    let cfg = SelectionConfig {
                        self_load,
                        ..SelectionConfig::load_aware(1.0, 100.0)
                    };
                    let top = selection::rank_candidates(&t, &env, sta, &cfg).unwrap().top().map(|c| c.target);
                    if top != best {
                        mismatches.push(format!("argmax d{d} sta {sta}"));
                    }
                    argmax += 1;
                }
            }
        }
    }

    // protocol four-stage run == initial association + direct pass
    let mixed = [
        spec_deployments("2.3", |p| p.selection.beta_pct == 50.0 && p.per_sta_load_bps == 4.2e6),
        spec_deployments("1.3", |p| {
            p.params.n_ext == 4 && p.selection.mechanism == Mechanism::LoadAware && p.per_sta_load_bps > 3.0e6
        }),
    ];
    for point in &mixed {
        for d in 0..200 {
            let dep = scenarios::build_deployment(&point.scenario, d, point.selection.beta_pct, p).unwrap();
            let env = env_for(&dep.topology, dep.radio_env(&config.radio_env()), point.per_sta_load_bps);
            let initial = selection::initial_association(&dep.topology, &env).unwrap();
            let (direct, _) = selection::reassociation_pass(&initial, &env, &point.selection, &dep.capable).unwrap();
            let (proto, log) =
                protocol::run_protocol(&dep.topology, &env, &point.selection, MeasurementMode::ActiveScan).unwrap();
            if direct != proto || !log.order_violations().is_empty() {
                mismatches.push(format!("protocol d{d}"));
            }
            composed += 1;
        }
    }
    check(
        6,
        mismatches.is_empty(),
        format!(
            "beta=0 {beta0} deployments, alpha=1 argmax {argmax} STA decisions, protocol composition {composed} deployments; mismatches {:?}",
            mismatches
        ),
    );
}

fn testbed_topology(testbed: u8, with_ext: bool, sel: &SelectionConfig, b_t_bps: f64) -> Topology {
    let f = testbed_fixture();
    let t = f.topology(testbed, with_ext).unwrap();
    let env = env_for(&t, f.radio_env(&RadioEnv::default(), &t), b_t_bps / 5.0);
    let initial = selection::initial_association(&t, &env).unwrap();
    let capable: BTreeSet<NodeId> = t.stas().map(|s| s.id).collect();
    selection::reassociation_pass(&initial, &env, sel, &capable).unwrap().0
}

fn column(t: &Topology, stas: &[u8]) -> String {
    stas.iter()
        .map(|&n| {
            let parent = t.parent_of(fixture_sta_id(n));
            let name = match parent {
                Some(p) if p == FIXTURE_EXTENDER => "E",
                Some(_) => "AP",
                None => "-",
            };
            format!("#{n}:{name}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn c07_testbed_fixture() {
    let f = testbed_fixture();
    let mut ok = true;
    let mut lines = Vec::new();
    for col in &f.expected {
        let stas = Fixture::testbed_stas(col.testbed).unwrap();
        let sel = match col.mechanism {
            Mechanism::RssiBased => SelectionConfig::rssi_based(),
            Mechanism::LoadAware => SelectionConfig::load_aware(0.5, 100.0),
        };
        let b_t = col.b_t_bps.unwrap_or(5e6);
        let t = testbed_topology(col.testbed, col.with_extender, &sel, b_t);
        let matches = col
            .associations
            .iter()
            .all(|(&n, &p)| t.parent_of(fixture_sta_id(n)) == Some(p));
        let expected: Topology = {
            let mut e = t.clone();
            for (&n, &p) in &col.associations {
                e.set_association(fixture_sta_id(n), p).unwrap();
            }
            e
        };
        match col.mechanism {
            Mechanism::RssiBased => {
                ok &= matches;
                lines.push(format!(
                    "testbed {} {} rssi: {} [{}]",
                    col.testbed,
                    if col.with_extender { "AP+E" } else { "AP only" },
                    column(&t, &stas),
                    if matches { "match" } else { "MISMATCH" }
                ));
            }
            Mechanism::LoadAware => {
                let on_ext = t.stas_of(FIXTURE_EXTENDER).count();
                ok &= on_ext >= 1;
                lines.push(format!(
                    "B_T={} Mbps loadaware: {} on E={} (reference {}){}",
                    b_t / 1e6,
                    column(&t, &stas),
                    on_ext,
                    column(&expected, &stas),
                    if matches { "" } else { " differs" }
                ));
            }
        }
    }
    let mut err = std::io::stderr();
    for l in &lines {
        let _ = writeln!(err, "[acceptance]   fixture | {l}");
    }
    check(
        7,
        ok,
        "RSSI-based columns exact on both testbeds; load-aware keeps >=1 STA on the Extender at every B_T".into(),
    );
}

#[test]
fn c08_operational_range_ordering() {
    let start = Instant::now();
    let cfg = RunConfig::for_test("1.3", Config::builtin(), &Overrides::default()).unwrap();
    let aggs = runner::run_aggregates(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut ranges: BTreeMap<(usize, Mechanism), f64> = BTreeMap::new();
    for (_, s) in runner::series(&aggs) {
        let key = (s[0].params.n_ext, s[0].mechanism);
        ranges.insert(key, runner::operational_range(&s, Criterion::NoCongestion).unwrap() / 1e6);
    }
    let g = |n, m| ranges[&(n, m)];
    let no_ext = g(0, Mechanism::RssiBased);
    let (r2, r4) = (g(2, Mechanism::RssiBased), g(4, Mechanism::RssiBased));
    let (l2, l4) = (g(2, Mechanism::LoadAware), g(4, Mechanism::LoadAware));
    let ratio2 = l2 / r2;
    let ratio4 = l4 / r4;
    let ordered = no_ext < r2.max(r4) && r2.max(r4) < l2.min(l4);
    let ok = ordered && ratio2 >= 1.35 && ratio4 >= 1.35 && secs < 300.0;
    let reference = [
        ("0E", no_ext, 13.20),
        ("2E rssi", r2, 16.44),
        ("4E rssi", r4, 17.16),
        ("2E loadaware", l2, 25.44),
        ("4E loadaware", l4, 27.12),
    ];
    let approx: Vec<String> = reference
        .iter()
        .map(|(name, v, p)| {
            let dev = 100.0 * (v - p) / p;
            let mark = if dev.abs() <= 30.0 { "" } else { " outside 30%" };
            format!("{name} {v:.2} vs {p} ({dev:+.0}%{mark})")
        })
        .collect();
    check(
        8,
        ok,
        format!(
            "no-congestion ranges (Mbps) noExt {no_ext:.2} < rssi max({r2:.2}, {r4:.2}) < loadaware min({l2:.2}, {l4:.2}); ratios {ratio2:.2}, {ratio4:.2}; {secs:.0} s; vs reference: {}",
            approx.join(", ")
        ),
    );
}

#[test]
fn c09_single_channel_second_extender() {
    let mut cfg = RunConfig::for_test("2.1", Config::builtin(), &Overrides::default()).unwrap();
    cfg.points.retain(|p| p.params.channel_plan == Some(ChannelPlan::Single));
    let aggs = runner::run_aggregates(&cfg).unwrap();
    let mut ranges: BTreeMap<(usize, Mechanism), f64> = BTreeMap::new();
    for (_, s) in runner::series(&aggs) {
        let key = (s[0].params.n_ext, s[0].mechanism);
        ranges.insert(key, runner::operational_range(&s, Criterion::NoCongestion).unwrap());
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [Mechanism::RssiBased, Mechanism::LoadAware] {
        let one = ranges[&(1, m)];
        let two = ranges[&(2, m)];
        let change = (two - one).abs() / one;
        ok &= change < 0.10;
        parts.push(format!(
            "{} 1E {:.2} -> 2E {:.2} Mbps ({:.1}%)",
            m.as_str(),
            one / 1e6,
            two / 1e6,
            100.0 * change
        ));
    }
    check(9, ok, format!("Test 2.1 single channel: {}", parts.join("; ")));
}

/// Delivered fraction and utilization of every STA, computed from the
/// raw flow definitions without the perf module.
fn brute_force(t: &Topology, env: &Environment) -> (BTreeMap<NodeId, f64>, BTreeMap<ChannelId, f64>) {
    let l = env.traffic.packet_length_bits;
    let b = env.traffic.per_sta_load_bps;
    let airtime = |ch: ChannelId, rate: f64| env.mac.for_band(ch.band).fixed_us() * 1e-6 + l / rate;
    let mut util: BTreeMap<ChannelId, f64> = BTreeMap::new();
    let mut hops: BTreeMap<NodeId, Vec<ChannelId>> = BTreeMap::new();
    let mut through: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (&sta, &parent) in &t.associations {
        let ch = t.access_channel(parent).unwrap();
        let rate = env.radio.link_rate(t, sta, parent, Band::Band2G4).unwrap().phy_rate_bps;
        *util.entry(ch).or_default() += b / l * airtime(ch, rate);
        let mut path = vec![ch];
        let mut node = parent;
        while let Some(&up) = t.backhaul_parent.get(&node) {
            *through.entry(node).or_default() += b;
            path.push(t.node(node).unwrap().backhaul_radio().unwrap().channel);
            node = up;
        }
        hops.insert(sta, path);
    }
    for (&e, &load) in &through {
        let parent = t.backhaul_parent[&e];
        let ch = t.node(e).unwrap().backhaul_radio().unwrap().channel;
        let rate = env.radio.link_rate(t, e, parent, Band::Band5G).unwrap().phy_rate_bps;
        *util.entry(ch).or_default() += load / l * airtime(ch, rate);
    }
    let delivered = hops
        .into_iter()
        .map(|(sta, path)| {
            let f: f64 = path.iter().map(|c| (1.0 / util[c]).min(1.0)).product();
            (sta, b * f)
        })
        .collect();
    (delivered, util)
}

#[test]
fn c10_perf_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut conserved, mut oracle, mut clamp, mut mono) = (0, 0, 0, 0);
    let mut failures = Vec::new();
    let mut small = 0;
    while small < 1000 {
        let t = random_topology(&mut rng);
        let env = env_for(&t, RadioEnv::default(), rng.random_range(1e5..2.5e7));
        let t = selection::initial_association(&t, &env).unwrap();
        let r = perf::evaluate(&t, &env).unwrap();
        let max_flows = r.per_channel.values().map(|c| c.flows.len()).max().unwrap_or(0);

        if !r.congested {
            let b = env.traffic.per_sta_load_bps;
            let delivered: f64 = r.per_sta.values().map(|s| s.delivered_bps).sum();
            let offered: f64 = r.per_sta.values().map(|_| b).sum();
            let each = r.per_sta.values().all(|s| s.delivered_bps == b);
            if !each || delivered != offered || r.network_throughput_pct != 100.0 {
                failures.push("conservation");
            }
            conserved += 1;
        }
        if max_flows <= 3 {
            let (want, util) = brute_force(&t, &env);
            for (sta, s) in &r.per_sta {
                if (s.delivered_bps - want[sta]).abs() > 1e-9 * want[sta].max(1.0) {
                    failures.push("oracle");
                }
            }
            for (ch, u) in util {
                if (r.per_channel[&ch].utilization - u).abs() > 1e-9 {
                    failures.push("oracle utilization");
                }
            }
            oracle += 1;
            small += 1;
        }
        for c in r.per_channel.values() {
            if c.busy_fraction != c.utilization.min(1.0) || !(0.0..=1.0).contains(&c.busy_fraction) {
                failures.push("clamp");
            }
            clamp += 1;
        }
        let scale = rng.random_range(1.0..4.0);
        let env2 = env_for(&t, RadioEnv::default(), env.traffic.per_sta_load_bps * scale);
        let r2 = perf::evaluate(&t, &env2).unwrap();
        for (ch, c) in &r.per_channel {
            if r2.per_channel[ch].busy_fraction < c.busy_fraction {
                failures.push("busy monotonicity");
            }
        }
        if r2.network_throughput_pct > r.network_throughput_pct + 1e-12 {
            failures.push("throughput monotonicity");
        }
        mono += 1;
    }
    failures.dedup();
    check(
        10,
        failures.is_empty(),
        format!(
            "conservation {conserved} uncongested networks, oracle {oracle} networks with <=3 flows per channel, clamp {clamp} channels, load scaling {mono} networks; failures {failures:?}"
        ),
    );
}

#[test]
fn c11_worker_count_determinism() {
    let mut cfg = RunConfig::for_test("2.3", Config::builtin(), &Overrides {
        k: Some(25),
        ..Overrides::default()
    })
    .unwrap();
    let mut files = Vec::new();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (w, dir) in [1usize, 8].into_iter().zip(&dirs) {
        cfg.workers = Some(w);
        let (_, paths) = runner::run_to_dir(&cfg, dir.path()).unwrap();
        files.push((
            std::fs::read(&paths.rows_csv).unwrap(),
            std::fs::read(&paths.aggregates_csv).unwrap(),
        ));
    }
    let same = files[0] == files[1];
    check(
        11,
        same && !files[0].0.is_empty(),
        format!(
            "Test 2.3 k=25 ({} deployments): rows CSV {} bytes, 1 vs 8 workers byte-identical = {same}",
            cfg.total_deployments(),
            files[0].0.len()
        ),
    );
}

#[test]
fn c12_external_load_sweep() {
    let cfg = RunConfig::for_test("2.4", Config::builtin(), &Overrides::default()).unwrap();
    let out = runner::run(&cfg).unwrap();
    let key = |r: &runner::ResultRow| r.params.b_ext_bps.unwrap().to_bits();
    let rssi: BTreeMap<u64, &runner::ResultRow> = out
        .rows
        .iter()
        .filter(|r| r.params.n_ext == 1 && r.mechanism == Mechanism::RssiBased)
        .map(|r| (key(r), r))
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut any_flip = false;
    for alpha in [0.5, 0.75, 1.0] {
        let la: Vec<&runner::ResultRow> = out
            .rows
            .iter()
            .filter(|r| r.mechanism == Mechanism::LoadAware && r.alpha == alpha)
            .collect();
        let excess: Vec<f64> = la
            .iter()
            .map(|r| r.avg_delay_ms - rssi[&key(r)].avg_delay_ms)
            .collect();
        let worse = excess.iter().filter(|&&e| e > 0.0).count();
        let worst = excess.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ok &= worse == 0 && la.len() == 49;
        let flips: Vec<f64> = la
            .windows(2)
            .filter(|w| w[0].associations != w[1].associations)
            .map(|w| w[1].params.b_ext_bps.unwrap() / 1e6)
            .collect();
        any_flip |= !flips.is_empty();
        parts.push(format!(
            "alpha {alpha}: {worse} points worse than rssi (max excess {worst:+.3} ms), parent jumps at B_EXT {flips:?} Mbps"
        ));
    }
    check(12, ok && any_flip, parts.join("; "));
}
