mod common;

use proptest::prelude::*;
use rand::Rng;
use streamfair::basin::{self, BasinSpec};
use streamfair::bundle;
use streamfair::graph::BasinGraph;
use streamfair::metrics::{self, GroupPooling, WindowScan};
use streamfair::sampler::{self, ContinuousMember};
use streamfair::train::Dataset;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn multi_hop_influence_telescopes(seed in any::<u64>()) {
        let (graph, flows) = common::random_basin(seed, 30, 3);
        let (product_gap, hop_gap) = common::telescoping_errors(&graph, &flows);
        prop_assert_eq!(product_gap, 0.0);
        prop_assert!(hop_gap <= 1e-12);
    }

    #[test]
    fn rescaled_group_sums_are_equal(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (members, base) = common::random_neighborhood(&mut r);
        prop_assert!(common::rescaled_spread(&members, &base) <= 1e-9);
    }

    #[test]
    fn density_matches_double_loop(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        prop_assert!(common::density_gap(&mut r) <= 1e-12);
    }

    #[test]
    fn exhaustive_worst_window_matches_brute_force(seed in any::<u64>(), width in 1u32..8000) {
        let mut r = common::rng(seed);
        let errors = common::random_errors(&mut r, 100);
        let width = f64::from(width);
        let got = metrics::worst_window(&errors, width, WindowScan::Exhaustive).unwrap();
        let expected = common::brute_force_worst(&errors, width);
        prop_assert!((got.rmse - expected).abs() <= 1e-12 * expected.max(1.0), "{} vs {}", got.rmse, expected);
    }

    #[test]
    fn stride_curve_matches_naive_rescan(seed in any::<u64>(), width in 1u32..8000, tenths in 1u32..=10) {
        let mut r = common::rng(seed);
        let errors = common::random_errors(&mut r, 100);
        let (width, stride) = (f64::from(width), f64::from(tenths) / 10.0);
        let curve = metrics::window_curve(&errors, width, stride).unwrap();
        let naive = common::naive_stride_curve(&errors, width, stride);
        prop_assert_eq!(curve.len(), naive.len());
        for (w, (start, v)) in curve.iter().zip(&naive) {
            prop_assert_eq!(w.start, *start);
            prop_assert!((w.rmse - v).abs() <= 1e-12 * v.max(1.0));
        }
        let worst = metrics::worst_window(&errors, width, WindowScan::Stride(stride)).unwrap();
        let top = naive.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((worst.rmse - top).abs() <= 1e-12 * top.max(1.0));
    }

    #[test]
    fn heat_mixing_stays_within_its_inputs(seed in any::<u64>()) {
        prop_assert!(common::convexity_violation(seed) <= 1e-12);
    }

    #[test]
    fn m_fair_ignores_group_names(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let errors = common::random_errors(&mut r, 60);
        let k = r.gen_range(1..=4);
        let groups: Vec<usize> = errors.iter().map(|_| r.gen_range(0..k)).collect();
        let relabeled: Vec<usize> = groups.iter().map(|g| k - 1 - g).collect();
        for pooling in [GroupPooling::Observations, GroupPooling::Segments] {
            let a = metrics::group_fairness(&errors, &groups, k, pooling).unwrap();
            let b = metrics::group_fairness(&errors, &relabeled, k, pooling).unwrap();
            prop_assert!(a.m_fair >= 0.0);
            prop_assert!((a.m_fair - b.m_fair).abs() <= 1e-12);
            prop_assert_eq!(a.overall_rmse, b.overall_rmse);
        }
    }

    #[test]
    fn discrete_modifier_never_worsens_balance(seed in any::<u64>(), budget in 1usize..12) {
        let mut r = common::rng(seed);
        let (initial, _) = common::random_neighborhood(&mut r);
        let (mut pool, _) = common::random_neighborhood(&mut r);
        for (k, m) in pool.iter_mut().enumerate() {
            m.id = 1000 + k;
        }
        let ratio = |set: &[sampler::GroupMember]| {
            let present: std::collections::BTreeSet<usize> = initial.iter().chain(&pool).map(|m| m.group).collect();
            let mut sums: std::collections::BTreeMap<usize, f64> = present.into_iter().map(|g| (g, 0.0)).collect();
            for m in set {
                *sums.get_mut(&m.group).unwrap() += m.value;
            }
            sampler::balance_ratio(&sums)
        };
        let out = sampler::modify_discrete(&initial, &pool, budget, 0.1, 0.3);
        prop_assert!(ratio(&out) <= ratio(&initial));
        for m in &out {
            prop_assert!(initial.contains(m) || pool.contains(m));
        }
        let ids: std::collections::BTreeSet<usize> = out.iter().map(|m| m.id).collect();
        prop_assert_eq!(ids.len(), out.len());
    }

    #[test]
    fn continuous_modifier_widens_the_spread(seed in any::<u64>(), budget in 1usize..12) {
        let mut r = common::rng(seed);
        let member = |r: &mut rand_chacha::ChaCha8Rng, id| ContinuousMember {
            id,
            s: r.gen_range(0.0..100.0),
            influence: r.gen_range(0.0..1.0),
        };
        let initial: Vec<ContinuousMember> = (0..r.gen_range(0..6)).map(|id| member(&mut r, id)).collect();
        let pool: Vec<ContinuousMember> = (0..r.gen_range(0..10)).map(|k| member(&mut r, 100 + k)).collect();
        let out = sampler::modify_continuous(&initial, &pool, budget);
        prop_assert_eq!(&out[..initial.len()], &initial[..]);
        prop_assert!(out.len() - initial.len() <= (budget / 2).max(1));
        let mut values: Vec<f64> = initial.iter().map(|m| m.s).collect();
        for m in &out[initial.len()..] {
            let before = sampler::variance(&values);
            values.push(m.s);
            prop_assert!(sampler::variance(&values) > before);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bundle_text_round_trips(seed in any::<u64>(), n in 2usize..25, days in 2usize..40) {
        let mut spec = BasinSpec::new(n, days, seed);
        spec.observation_density = 0.4;
        spec.streamflow_observation_density = 0.3;
        let data: Dataset = basin::generate(&spec).unwrap().into();
        let graph_text = data.graph.to_json();
        let series_text = bundle::series_csv(&data);
        let sensitive_text = bundle::sensitive_csv(&data);
        let back = bundle::assemble(
            BasinGraph::from_json(&graph_text).unwrap(),
            bundle::parse_series_csv(&series_text).unwrap(),
            bundle::parse_sensitive_csv(&sensitive_text).unwrap(),
        )
        .unwrap();
        prop_assert_eq!(back.graph.to_json(), graph_text);
        prop_assert_eq!(bundle::series_csv(&back), series_text);
        prop_assert_eq!(bundle::sensitive_csv(&back), sensitive_text);
        prop_assert_eq!(&back.sensitive, &data.sensitive);
    }
}
