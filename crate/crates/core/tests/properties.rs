use ftclust_core::certificate::{knapsack_bound, matroid_bound};
use ftclust_core::flow::FlowNetwork;
use ftclust_core::knapsack::{kumar_delta, round_knapsack, GuessPair};
use ftclust_core::pipeline::round_matroid;
use ftclust_core::prep::random_mixture;
use ftclust_core::{drive_knapsack, exact_solve, gen_random, lp_lower_bound, q, solve_matroid, ConstraintKind, Rational};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = ConstraintKind> {
    prop_oneof![
        Just(ConstraintKind::Uniform),
        Just(ConstraintKind::Partition),
        Just(ConstraintKind::Matroid)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matroid_runs_certify_and_repeat(seed in 0u64..1_000_000, n_c in 1usize..7, n_f in 1usize..7, r in 1usize..4, kind in kind()) {
        prop_assume!(n_f >= r);
        let inst = gen_random(seed, n_c, n_f, r, kind).unwrap();
        let run = solve_matroid(&inst).unwrap();
        prop_assert!(run.solution.total_cost <= &matroid_bound(&inst.gamma()) * &run.lp_value);
        prop_assert!(run.stats.copies <= n_f * (2 * n_c + 1));
        prop_assert_eq!(&run.solution.total_cost, &(&run.solution.facility_cost + &run.solution.service_cost));
        let again = solve_matroid(&inst).unwrap();
        prop_assert_eq!(&run.solution, &again.solution);
        prop_assert_eq!(&run.certificate, &again.certificate);
    }

    #[test]
    fn mixtures_round_within_bound(seed in 0u64..1_000_000, r in 1usize..4, kind in kind()) {
        let inst = gen_random(seed, 6, 6, r, kind).unwrap();
        let frac = random_mixture(&inst, seed).unwrap();
        let run = round_matroid(&inst, &frac).unwrap();
        prop_assert!(run.solution.total_cost <= &matroid_bound(&inst.gamma()) * &frac.objective);
        prop_assert!(run.stats.short + run.stats.full == run.stats.representatives);
    }

    #[test]
    fn knapsack_mixtures_stay_in_budget(seed in 0u64..1_000_000, r in 1usize..4) {
        let inst = gen_random(seed, 6, 6, r, ConstraintKind::Knapsack).unwrap();
        let frac = random_mixture(&inst, seed).unwrap();
        let guess = GuessPair { opt: frac.objective.clone(), opt_f: inst.open_cost.iter().max().unwrap().clone() };
        let run = round_knapsack(&inst, &guess, &frac).unwrap();
        prop_assert!(run.t_case.t <= 2);
        prop_assert!(inst.satisfies_constraint(&run.solution.open));
    }

    #[test]
    fn exact_sandwich(seed in 0u64..1_000_000, n_c in 1usize..6, r in 1usize..3, knap in any::<bool>()) {
        let kind = if knap { ConstraintKind::Knapsack } else { ConstraintKind::Matroid };
        let inst = gen_random(seed, n_c, 5, r, kind).unwrap();
        let exact = exact_solve(&inst, 20).unwrap();
        let lb = lp_lower_bound(&inst, &exact).unwrap();
        prop_assert!(lb <= exact.opt_cost);
        let total = if knap {
            let run = drive_knapsack(&inst).unwrap();
            prop_assert!(run.best.solution.total_cost <= &knapsack_bound(&inst.gamma(), &inst.epsilon) * &exact.opt_cost);
            run.best.solution.total_cost
        } else {
            solve_matroid(&inst).unwrap().solution.total_cost
        };
        prop_assert!(exact.opt_cost <= total);
    }

    #[test]
    fn radius_bound_is_maximal(
        ds in prop::collection::vec((0i64..500, 1i64..9), 0..8),
        opt in (0i64..1000, 1i64..9),
    ) {
        let mut dists = vec![q(0, 1)];
        dists.extend(ds.iter().map(|&(n, d)| q(n, d)));
        let opt = q(opt.0, opt.1);
        let delta = kumar_delta(&dists, &opt);
        let load = |x: &Rational| -> Rational { dists.iter().map(|d| (x - d).max(q(0, 1))).sum() };
        prop_assert!(load(&delta) <= opt);
        prop_assert!(load(&(&delta + &q(1, 1_000_000))) > opt);
    }

    #[test]
    fn max_flow_equals_min_cut(edges in prop::collection::vec((0usize..6, 0usize..6, 0u64..5), 0..16)) {
        let n = 6;
        let mut g = FlowNetwork::new(n);
        for &(a, b, c) in &edges {
            g.add_edge(a, b, c);
        }
        let value = g.max_flow(0, n - 1);
        let min_cut = (0u32..1 << n)
            .filter(|m| m & 1 == 1 && m >> (n - 1) & 1 == 0)
            .map(|m| edges.iter().filter(|&&(a, b, _)| m >> a & 1 == 1 && m >> b & 1 == 0).map(|e| e.2).sum::<u64>())
            .min()
            .unwrap();
        prop_assert_eq!(value, min_cut);
    }
}
