use proptest::prelude::*;

use sirvar::abm::{run_abm_trace, Population, RecoveryModel, Status};
use sirvar::network::{build_small_world, SmallWorldParams};
use sirvar::rng::rng_from_seed;
use sirvar::sd::integrate;
use sirvar::stats::{quantile_sorted, signed_rank_normal_p, signed_rank_test, weekly_summary, wilcoxon_signed_rank};
use sirvar::{EnsembleResult, SimError, SirParams, WeeklySeries};

fn sir_params() -> impl Strategy<Value = SirParams> {
    (100usize..200_000, 0.5f64..20.0, 0.01f64..0.5, 1.0f64..12.0, 1usize..50).prop_map(|(n, c, p, d, i0)| {
        SirParams::new(n, c, p, d, i0.min(n)).unwrap()
    })
}

fn rank(status: Status) -> u8 {
    match status {
        Status::Susceptible => 0,
        Status::Infectious => 1,
        Status::Recovered => 2,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn topology_is_simple_symmetric_and_keeps_edge_count(
        n in 3usize..120,
        half in 1usize..8,
        p in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let k = 2 * half;
        prop_assume!(k < n);
        let g = build_small_world(n, SmallWorldParams { k, p_rewire: p }, seed).unwrap();
        prop_assert_eq!(g.edge_count(), n * k / 2);
        for u in 0..n {
            let nb = g.neighbors(u);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]), "duplicate or unsorted at {}", u);
            for &v in nb {
                prop_assert!(v as usize != u);
                prop_assert!(g.neighbors(v as usize).binary_search(&(u as u32)).is_ok());
            }
        }
    }

    #[test]
    fn sd_conserves_population_and_is_monotone(params in sir_params(), dt in 0.01f64..0.5) {
        let traj = match integrate(&params, 105.0, dt) {
            Ok(t) => t,
            Err(SimError::StepTooLarge { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let n = params.population() as f64;
        let tol = 1e-6 * n;
        for w in traj.states().windows(2) {
            prop_assert!((w[1].total() - n).abs() <= tol);
            prop_assert!(w[1].s <= w[0].s + tol);
            prop_assert!(w[1].r >= w[0].r - tol);
            prop_assert!(w[1].i >= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quantiles_are_ordered_and_shift_equivariant(
        mut xs in prop::collection::vec(0.0f64..1e5, 1..60),
        shift in -1e3f64..1e3,
    ) {
        xs.sort_by(f64::total_cmp);
        let qs = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile_sorted(&xs, q));
        prop_assert!(qs.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(qs[0], xs[0]);
        prop_assert_eq!(qs[4], xs[xs.len() - 1]);
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        for (q, base) in [0.25, 0.5, 0.75].into_iter().zip([qs[1], qs[2], qs[3]]) {
            prop_assert!((quantile_sorted(&shifted, q) - (base + shift)).abs() < 1e-7);
        }
    }

    #[test]
    fn summary_iqr_is_non_negative(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1e4, 6), 1..30),
    ) {
        let ens = EnsembleResult::new(rows.into_iter().map(|r| WeeklySeries::new(r).unwrap()).collect()).unwrap();
        let s = weekly_summary(&ens).unwrap();
        prop_assert!(s.iqr.iter().all(|&v| v >= 0.0));
        prop_assert!((s.total_variation - s.iqr.iter().sum::<f64>()).abs() < 1e-6);
    }

    #[test]
    fn weekly_summary_is_ordered_and_shift_invariant(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1e4, 8), 1..40),
        shift in 0.0f64..1e3,
    ) {
        let make = |add: f64| EnsembleResult::new(
            rows.iter().map(|r| WeeklySeries::new(r.iter().map(|v| v + add).collect()).unwrap()).collect(),
        ).unwrap();
        let base = weekly_summary(&make(0.0)).unwrap();
        let moved = weekly_summary(&make(shift)).unwrap();
        for w in 0..base.weeks() {
            prop_assert!(base.min[w] <= base.q1[w] && base.q1[w] <= base.median[w]);
            prop_assert!(base.median[w] <= base.q3[w] && base.q3[w] <= base.max[w]);
            prop_assert!((moved.median[w] - base.median[w] - shift).abs() < 1e-7);
            prop_assert!((moved.q1[w] - base.q1[w] - shift).abs() < 1e-7);
            prop_assert!((moved.q3[w] - base.q3[w] - shift).abs() < 1e-7);
            prop_assert!((moved.iqr[w] - base.iqr[w]).abs() < 1e-7);
        }
        prop_assert!((moved.total_variation - base.total_variation).abs() < 1e-6);
    }

    #[test]
    fn wilcoxon_ignores_argument_order(
        pairs in prop::collection::vec((0u32..500, 0u32..500), 1..30),
    ) {
        let x = WeeklySeries::new(pairs.iter().map(|p| f64::from(p.0)).collect()).unwrap();
        let y = WeeklySeries::new(pairs.iter().map(|p| f64::from(p.1)).collect()).unwrap();
        let a = wilcoxon_signed_rank(&x, &y).unwrap();
        let b = wilcoxon_signed_rank(&y, &x).unwrap();
        prop_assert_eq!(a.w_statistic, b.w_statistic);
        prop_assert_eq!(a.p_value, b.p_value);
        prop_assert_eq!(a.reject_at_5pct, b.reject_at_5pct);
    }

    #[test]
    fn signed_rank_is_symmetric_under_negation(d in prop::collection::vec(-50i32..50, 1..30)) {
        let d: Vec<f64> = d.into_iter().map(f64::from).collect();
        let neg: Vec<f64> = d.iter().map(|x| -x).collect();
        let a = signed_rank_test(&d);
        let b = signed_rank_test(&neg);
        prop_assert_eq!(a.w_plus, b.w_minus);
        prop_assert_eq!(a.w_statistic, b.w_statistic);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        prop_assert!(a.p_value > 0.0 && a.p_value <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn exact_and_normal_p_agree_for_moderate_n(
        n in 8usize..=20,
        d in prop::collection::vec((1u32..100_000, any::<bool>()), 20),
    ) {
        // distinct magnitudes keep the exact null free of ties
        let mut seen = std::collections::HashSet::new();
        let d: Vec<f64> = d
            .into_iter()
            .filter(|(m, _)| seen.insert(*m))
            .take(n)
            .map(|(m, neg)| if neg { -f64::from(m) } else { f64::from(m) })
            .collect();
        prop_assume!(d.len() == n);
        let exact = signed_rank_test(&d).p_value;
        let approx = signed_rank_normal_p(&d);
        prop_assert!((exact - approx).abs() < 0.02, "exact {} normal {}", exact, approx);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn abm_conserves_agents_and_moves_forward(
        n in 50usize..5000,
        half in 1usize..6,
        p_rewire in 0.0f64..=1.0,
        c in 0.5f64..12.0,
        p in 0.01f64..0.6,
        i0 in 1usize..10,
        seed in any::<u64>(),
        exponential in any::<bool>(),
    ) {
        let k = 2 * half;
        prop_assume!(k < n);
        let params = SirParams::new(n, c, p, 4.2, i0).unwrap();
        let recovery = if exponential { RecoveryModel::Exponential } else { RecoveryModel::Fixed };
        let topo = build_small_world(n, SmallWorldParams { k, p_rewire }, seed).unwrap();
        let mut rng = rng_from_seed(seed ^ 0x5eed);
        let mut pop = Population::susceptible(n);
        pop.seed_index_cases(&params, recovery, &mut rng);
        let mut prev: Vec<u8> = pop.agents().iter().map(|a| rank(a.status)).collect();
        let mut prev_counts = pop.counts();
        for _ in 0..60 {
            pop.step_day(&topo, &params, recovery, &mut rng);
            let now: Vec<u8> = pop.agents().iter().map(|a| rank(a.status)).collect();
            prop_assert!(prev.iter().zip(&now).all(|(a, b)| b >= a && b - a <= 1));
            let counts = pop.counts();
            prop_assert_eq!(counts.total(), n);
            prop_assert!(counts.s <= prev_counts.s);
            prop_assert!(counts.r >= prev_counts.r);
            prev = now;
            prev_counts = counts;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn small_outbreaks_die_out_within_a_year(
        n in 50usize..800,
        c in 1.0f64..10.0,
        seed in any::<u64>(),
        exponential in any::<bool>(),
    ) {
        let params = SirParams::new(n, c, 0.2, 4.2, 3).unwrap();
        let recovery = if exponential { RecoveryModel::Exponential } else { RecoveryModel::Fixed };
        let topo = build_small_world(n, SmallWorldParams { k: 6, p_rewire: 0.2 }, seed).unwrap();
        let trace = run_abm_trace(&params, &topo, 52 * 7, seed, recovery).unwrap();
        prop_assert_eq!(trace.last().unwrap().i, 0);
    }
}
