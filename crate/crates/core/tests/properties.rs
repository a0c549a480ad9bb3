use std::collections::BTreeSet;

use proptest::prelude::*;

use homewifi_core::config::Config;
use homewifi_core::model::{
    Band, ChannelId, Node, NodeId, NodeKind, Position, RadioConfig, Topology, TrafficProfile,
};
use homewifi_core::perf::{self, Environment, MacParams};
use homewifi_core::radio::{max_range_m, path_loss_db, rssi_dbm, PropagationParams, RadioEnv};
use homewifi_core::runner::{self, Aggregate, Criterion};
use homewifi_core::scenarios::{self, Scenario, SweepParams};
use homewifi_core::selection::{self, Mechanism, SelectionConfig};

fn env_for(t: &Topology, per_sta_bps: f64) -> Environment {
    Environment {
        radio: RadioEnv::default(),
        mac: MacParams::default(),
        traffic: TrafficProfile::new(12_000.0, per_sta_bps, t.stas().count()).unwrap(),
        external: vec![],
    }
}

prop_compose! {
    fn position(r: f64)(x in -r..r, y in -r..r) -> Position {
        Position::new(x, y)
    }
}

prop_compose! {
    /// AP plus up to three Extenders (some chained) and 1..=10 STAs.
    fn network()(
        ext in prop::collection::vec((position(40.0), 0usize..3, any::<bool>()), 0..=3),
        stas in prop::collection::vec((position(120.0), any::<bool>()), 1..=10),
        ap_ch in 0usize..3,
    ) -> Topology {
        let chs = [1, 6, 11];
        let mut t = Topology::new(3);
        t.add_node(Node::infrastructure(
            NodeId(0), NodeKind::Ap, Position::new(0.0, 0.0), ChannelId::g24(chs[ap_ch]), ChannelId::g5(36),
        ));
        let n_ext = ext.len() as u32;
        // each Extender sits within 5 GHz range of its parent
        for (i, (offset, ch, chained)) in ext.into_iter().enumerate() {
            let id = NodeId(i as u32 + 1);
            let parent = if chained && i > 0 { NodeId(i as u32) } else { NodeId(0) };
            let base = t.node(parent).unwrap().position;
            let pos = Position::new(base.x + offset.x, base.y + offset.y);
            t.add_node(Node::infrastructure(id, NodeKind::Extender, pos, ChannelId::g24(chs[ch]), ChannelId::g5(36)));
            t.backhaul_parent.insert(id, parent);
        }
        for (j, (pos, capable)) in stas.into_iter().enumerate() {
            t.add_node(Node::sta(NodeId(n_ext + 1 + j as u32), pos, capable));
        }
        t
    }
}

fn capable_of(t: &Topology) -> BTreeSet<NodeId> {
    t.stas().filter(|n| n.supports_11kv).map(|n| n.id).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // radio

    #[test]
    fn path_loss_grows_with_distance_and_frequency(d in 1.0..500.0f64, dd in 0.1..100.0f64, f in 2400.0..6000.0f64) {
        let p = PropagationParams::default();
        prop_assert!(path_loss_db(f, d + dd, &p).unwrap() > path_loss_db(f, d, &p).unwrap());
        prop_assert!(path_loss_db(f + 100.0, d, &p).unwrap() > path_loss_db(f, d, &p).unwrap());
    }

    #[test]
    fn distance_below_one_metre_is_clamped(d in 0.0..1.0f64) {
        let p = PropagationParams::default();
        prop_assert_eq!(path_loss_db(2412.0, d, &p).unwrap(), path_loss_db(2412.0, 1.0, &p).unwrap());
    }

    #[test]
    fn max_range_inverts_rssi(threshold in -95.0..-20.0f64, five in any::<bool>()) {
        let p = PropagationParams::default();
        let ch = if five { ChannelId::g5(36) } else { ChannelId::g24(1) };
        let tx = RadioConfig::standard(ch);
        let d = max_range_m(&tx, threshold, &p).unwrap();
        prop_assume!(d > 1.0);
        let rssi = rssi_dbm(&tx, Position::new(0.0, 0.0), Position::new(d, 0.0), &p).unwrap();
        prop_assert!((rssi - threshold).abs() < 1e-9);
    }

    #[test]
    fn mcs_rate_is_monotone_in_rssi(a in -95.0..-20.0f64, b in -95.0..-20.0f64, five in any::<bool>()) {
        let tables = &Config::builtin().mcs_tables;
        let t = tables.for_band(if five { Band::Band5G } else { Band::Band2G4 });
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let r = |x| t.mcs_for_rssi(x, 2).map(|(_, r)| r).unwrap_or(0.0);
        prop_assert!(r(lo) <= r(hi));
    }

    // selection

    #[test]
    fn weighted_rssi_is_a_decreasing_unit_map(a in -120.0..40.0f64, b in -120.0..40.0f64) {
        let w = |x| selection::weighted_rssi(x, 20.0, -90.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&w(a)));
        if a < b {
            prop_assert!(w(a) >= w(b));
        }
    }

    #[test]
    fn scores_recompose_and_ap_has_no_backhaul(t in network(), load in 0.0..6e6f64, alpha in 0.0..=1.0f64) {
        let env = env_for(&t, load);
        let t = selection::initial_association(&t, &env).unwrap();
        let loads = perf::channel_loads(&t, &env).unwrap();
        for sta in t.stas().map(|n| n.id).collect::<Vec<_>>() {
            for (target, rssi) in selection::observe(&t, &env, sta).unwrap() {
                let s = selection::score(&t, sta, target, rssi, &loads, alpha).unwrap();
                let y = alpha * (s.weighted_rssi + s.access_load) + (1.0 - alpha) * s.backhaul_load_sum;
                prop_assert!((y - s.score).abs() <= 1e-12);
                if target == NodeId::AP {
                    prop_assert_eq!(s.backhaul_load_sum, 0.0);
                }
            }
        }
    }

    #[test]
    fn initial_association_picks_the_strongest_in_range(t in network()) {
        let env = env_for(&t, 1e6);
        let a = selection::initial_association(&t, &env).unwrap();
        prop_assert!(a.validate().is_empty());
        for sta in a.stas().map(|n| n.id).collect::<Vec<_>>() {
            let seen = selection::observe(&a, &env, sta).unwrap();
            match a.parent_of(sta) {
                None => prop_assert!(seen.is_empty()),
                Some(p) => {
                    let best = seen.iter().map(|&(_, r)| r).fold(f64::NEG_INFINITY, f64::max);
                    let mine = seen.iter().find(|&&(id, _)| id == p).unwrap().1;
                    prop_assert_eq!(mine, best);
                }
            }
        }
    }

    #[test]
    fn reassociation_moves_only_capable_stas(t in network(), load in 0.0..6e6f64, alpha in 0.0..=1.0f64) {
        let env = env_for(&t, load);
        let initial = selection::initial_association(&t, &env).unwrap();
        let capable = capable_of(&t);
        let cfg = SelectionConfig::load_aware(alpha, 100.0);
        let (out, moves) = selection::reassociation_pass(&initial, &env, &cfg, &capable).unwrap();
        prop_assert!(out.validate().is_empty());
        for m in &moves {
            prop_assert!(capable.contains(&m.sta));
        }
        for (sta, parent) in &initial.associations {
            if !capable.contains(sta) {
                prop_assert_eq!(out.parent_of(*sta), Some(*parent));
            }
        }
        prop_assert_eq!(out.associations.len(), initial.associations.len());
    }

    #[test]
    fn rssi_based_pass_is_the_identity(t in network()) {
        let env = env_for(&t, 2e6);
        let initial = selection::initial_association(&t, &env).unwrap();
        let (out, moves) =
            selection::reassociation_pass(&initial, &env, &SelectionConfig::rssi_based(), &capable_of(&t)).unwrap();
        prop_assert!(moves.is_empty());
        prop_assert_eq!(out, initial);
    }

    // perf

    #[test]
    fn perf_report_stays_in_bounds(t in network(), load in 0.0..2e7f64) {
        let env = env_for(&t, load);
        let t = selection::initial_association(&t, &env).unwrap();
        let r = perf::evaluate(&t, &env).unwrap();
        prop_assert!((0.0..=100.0).contains(&r.network_throughput_pct));
        prop_assert!(r.avg_delay_ms >= 0.0);
        for (sta, s) in &r.per_sta {
            let hops = 1 + t.backhaul_path(t.parent_of(*sta).unwrap()).unwrap().len();
            prop_assert!(s.delivered_bps <= load);
            prop_assert!(s.delay_ms <= env.mac.d_cap_ms * hops as f64);
        }
        for c in r.per_channel.values() {
            prop_assert_eq!(c.busy_fraction, c.utilization.min(1.0));
        }
        prop_assert_eq!(r.congested, r.per_channel.values().any(|c| c.utilization > 1.0));
    }

    #[test]
    fn utilization_scales_linearly_with_load(t in network(), load in 1e4..5e6f64, s in 1.0..5.0f64) {
        let env = env_for(&t, load);
        let t = selection::initial_association(&t, &env).unwrap();
        let a = perf::evaluate(&t, &env).unwrap();
        let b = perf::evaluate(&t, &env_for(&t, load * s)).unwrap();
        for (ch, c) in &a.per_channel {
            let u = b.per_channel[ch].utilization;
            prop_assert!((u - s * c.utilization).abs() <= 1e-9 * u.max(1.0));
        }
    }

    // scenarios

    #[test]
    fn deployments_are_reproducible_and_valid(pi in 0usize..1500, index in 0u64..100_000, beta in 0.0..=100.0f64) {
        let config = Config::builtin();
        let pts = scenarios::build_test("1.3", &config.grid_defaults()).unwrap();
        let point = &pts[pi];
        let a = scenarios::build_deployment(&point.scenario, index, beta, &config.propagation).unwrap();
        let b = scenarios::build_deployment(&point.scenario, index, beta, &config.propagation).unwrap();
        prop_assert_eq!(&a.topology, &b.topology);
        prop_assert!(a.topology.validate().is_empty());
        let n = a.stas().len();
        prop_assert_eq!(a.capable.len(), (beta * n as f64 / 100.0).round() as usize);
        if let Scenario::Spec(spec) = &point.scenario {
            let d_max = scenarios::d_max_m(&config.propagation).unwrap();
            for s in a.topology.stas() {
                prop_assert!(s.position.distance(&Position::new(0.0, 0.0)) <= 1.2 * d_max + 1e-9);
            }
            prop_assert_eq!(n, spec.n_sta);
        }
    }

    #[test]
    fn substreams_are_independent(seed in any::<u64>(), i in 0u64..1000, j in 0u64..1000) {
        prop_assume!(i != j);
        use rand::Rng;
        let mut a = scenarios::deployment_rng(seed, i);
        let mut a2 = scenarios::deployment_rng(seed, i);
        let mut b = scenarios::deployment_rng(seed, j);
        let x: u64 = a.random();
        prop_assert_eq!(x, a2.random::<u64>());
        prop_assert_ne!(x, b.random::<u64>());
    }

    // runner

    #[test]
    fn operational_range_is_a_swept_load_or_zero(flags in prop::collection::vec((any::<bool>(), 0.0..200.0f64), 1..40)) {
        let series: Vec<Aggregate> = flags
            .iter()
            .enumerate()
            .map(|(i, &(ok, thr))| Aggregate {
                test_id: "x".into(),
                point_index: i,
                params: SweepParams { n_ext: 0, channel_plan: None, rssi_ap_e: None, b_ext_bps: None },
                mechanism: Mechanism::RssiBased,
                alpha: 0.5,
                beta_pct: 100.0,
                b_t_bps: (i + 1) as f64 * 1e6,
                k: 1,
                mean_throughput_pct: thr.min(100.0),
                mean_delay_ms: 1.0,
                pct_congested: if ok { 0.0 } else { 10.0 },
                association_pct: 100.0,
            })
            .collect();
        let r = runner::operational_range(&series, Criterion::NoCongestion).unwrap();
        let lead = flags.iter().take_while(|f| f.0).count();
        prop_assert_eq!(r, lead as f64 * 1e6);
        // a criterion that every point meets reaches the top of the sweep
        let all = runner::operational_range(&series, Criterion::Delay10ms).unwrap();
        prop_assert_eq!(all, flags.len() as f64 * 1e6);
    }
}
