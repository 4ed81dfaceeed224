//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ftclust_core::knapsack::{grid_axes, kumar_delta};
use ftclust_core::pipeline::round_matroid;
use ftclust_core::prep::{random_mixture, solve_mlp};
use ftclust_core::{
    drive_knapsack, exact_solve, gen_random, lp_lower_bound, q, solve_matroid, Certificate, ConstraintKind, Instance,
    Rational, SideConstraint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ri(n: i64) -> Rational {
    Rational::from_integer(n)
}

/// `max{7 + (3g^2-g+2)/(g-1), 3 + (21g^3-6g^2+9g)/(g-1)^2}`, written out
/// independently of the library.
fn matroid_ratio(g: &Rational) -> Rational {
    let g2 = g * g;
    let g3 = &g2 * g;
    let gm1 = g - ri(1);
    let a = ri(7) + (ri(3) * &g2 - g + ri(2)) / gm1.clone();
    let b = ri(3) + (ri(21) * &g3 - ri(6) * &g2 + ri(9) * g) / (&gm1 * &gm1);
    a.max(b)
}

fn knapsack_ratio(g: &Rational, eps: &Rational) -> Rational {
    let onep = ri(1) + eps;
    matroid_ratio(g) + &onep * &((ri(3) * g * g - g + ri(2)) / (g * &(g - ri(1)))) + onep
}

/// Sum of the `r` nearest open distances per client plus opening costs.
fn recomputed_cost(inst: &Instance, open: &[usize]) -> Rational {
    let f: Rational = open.iter().map(|&i| &inst.open_cost[i]).sum();
    let service: Rational = (0..inst.clients.len())
        .map(|j| {
            let mut ds: Vec<Rational> = open.iter().map(|&i| inst.d(j, i).clone()).collect();
            ds.sort();
            ds.into_iter().take(inst.r).sum::<Rational>()
        })
        .sum();
    f + service
}

/// `f_total + sum_j r d_av(j)` at the relaxation optimum.
fn fractional_cost(inst: &Instance) -> Rational {
    let frac = solve_mlp(inst).unwrap();
    let f: Rational = frac.y.iter().zip(&inst.open_cost).map(|(y, f)| y * f).sum();
    let service: Rational = frac
        .x
        .iter()
        .enumerate()
        .flat_map(|(j, row)| row.iter().enumerate().map(move |(i, x)| (j, i, x)))
        .map(|(j, i, x)| x * inst.d(j, i))
        .sum();
    f + service
}

fn matroid_instances() -> Vec<Instance> {
    (0..200u64)
        .map(|seed| {
            let r = 1 + (seed as usize % 3);
            let n_c = 3 + (seed as usize / 3) % 5;
            let n_f = (4 + (seed as usize / 5) % 4).max(r);
            let kind = if seed % 2 == 0 { ConstraintKind::Uniform } else { ConstraintKind::Partition };
            let inst = gen_random(seed, n_c, n_f, r, kind).unwrap();
            assert_eq!(inst.delta, q(1, 10));
            inst
        })
        .collect()
}

fn knapsack_instances() -> Vec<Instance> {
    (0..100u64)
        .map(|seed| {
            let r = 1 + (seed as usize % 3);
            let n_c = 3 + (seed as usize / 3) % 5;
            let n_f = (4 + (seed as usize / 5) % 4).max(r);
            let inst = gen_random(1000 + seed, n_c, n_f, r, ConstraintKind::Knapsack).unwrap();
            assert_eq!(inst.epsilon, q(1, 20));
            inst
        })
        .collect()
}

struct Shared {
    certificate: Certificate,
}

fn criterion_1(shared: &mut Shared) -> String {
    assert_eq!(matroid_ratio(&ri(3)), ri(138));
    let mut worst = 0f64;
    for (k, inst) in matroid_instances().iter().enumerate() {
        let run = solve_matroid(inst).unwrap_or_else(|e| panic!("instance {k}: {e}"));
        let bound = matroid_ratio(&(ri(3) + &inst.delta));
        let base = fractional_cost(inst);
        let total = recomputed_cost(inst, &run.solution.open);
        assert_eq!(total, run.solution.total_cost, "instance {k}: reported cost");
        assert_eq!(base, run.lp_value, "instance {k}: relaxation value");
        assert!(total <= &bound * &base, "instance {k}: {total} > {bound} * {base}");
        if base.is_positive() {
            worst = worst.max((&total / &base).to_f64());
        }
        shared.certificate.merge(&run.certificate);
    }
    format!("200 instances within B(3.1) = {:.3}; worst cost/relaxation {worst:.3}", matroid_ratio(&q(31, 10)).to_f64())
}

fn criterion_2() -> String {
    let mut worst = 0f64;
    for (k, inst) in matroid_instances().iter().enumerate() {
        let run = solve_matroid(inst).unwrap();
        let exact = exact_solve(inst, 20).unwrap();
        let lb = lp_lower_bound(inst, &exact).unwrap();
        assert_eq!(recomputed_cost(inst, &exact.opt_set), exact.opt_cost);
        assert!(lb <= exact.opt_cost, "instance {k}: lower bound {lb} above optimum {}", exact.opt_cost);
        assert!(exact.opt_cost <= run.solution.total_cost, "instance {k}: rounding beats the optimum");
        if exact.opt_cost.is_positive() {
            worst = worst.max((&run.solution.total_cost / &exact.opt_cost).to_f64());
        }
    }
    format!("lp <= exact <= rounded on 200 instances; empirical max ratio {worst:.4}")
}

const STRUCTURAL_CHECKS: &[&str] = &[
    "balls_disjoint",
    "ball_mass_window",
    "queue_radius",
    "noalien_witness_queue",
    "noalien_geometry",
    "bundle_unit_mass",
    "bundles_disjoint",
    "shell_bundles",
    "queue_prefix_in_ball",
    "ball_bundles_are_queue_prefix",
    "safe_bundles_respect_balls",
    "removed_bundles_are_shells",
    "initial_objective_bound",
    "objective_consistent",
    "full_ball_objective",
    "short_ball_objective",
    "final_integral",
    "all_resolved",
    "dangerous_bundles_in_ball",
    "dangerous_bundle_coverage",
    "safe_bundle_witnesses",
];

fn criterion_3(shared: &mut Shared) -> String {
    // relaxation vertices rarely have dangerous clients, so fractional
    // mixtures of feasible sets drive the ball and queue machinery
    let mut runs = 0;
    for seed in 0..300u64 {
        let r = 1 + (seed as usize % 3);
        let inst = gen_random(5000 + seed, 7, 7, r, ConstraintKind::Matroid).unwrap();
        let frac = random_mixture(&inst, seed).unwrap();
        let run = round_matroid(&inst, &frac).unwrap_or_else(|e| panic!("mixture {seed}: {e}"));
        assert!(run.solution.total_cost <= &matroid_ratio(&inst.gamma()) * &frac.objective);
        shared.certificate.merge(&run.certificate);
        runs += 1;
    }
    let counts = &shared.certificate.checks;
    let missing: Vec<&str> = STRUCTURAL_CHECKS
        .iter()
        .copied()
        .filter(|c| counts.get(*c).copied().unwrap_or(0) == 0)
        .collect();
    assert!(missing.is_empty(), "never exercised: {missing:?}");
    let total: usize = STRUCTURAL_CHECKS.iter().map(|c| counts[*c]).sum();
    format!(
        "{} structural checks passed over the criterion 1, 4 and 6 runs plus {runs} mixtures; noalien {}, removed shells {}",
        total, counts["noalien_geometry"], counts["removed_bundles_are_shells"]
    )
}

fn criterion_4(shared: &mut Shared) -> String {
    let mut cases = [0usize; 3];
    let mut worst = 0f64;
    for (k, inst) in knapsack_instances().iter().enumerate() {
        let run = drive_knapsack(inst).unwrap_or_else(|e| panic!("instance {k}: {e}"));
        let exact = exact_solve(inst, 20).unwrap();
        let sol = &run.best.solution;
        let SideConstraint::Knapsack { weights, budget } = &inst.constraint else { unreachable!() };
        let weight: Rational = sol.open.iter().map(|&i| &weights[i]).sum();
        assert!(weight <= *budget, "instance {k}: weight {weight} over {budget}");
        assert!(run.best.t_case.t <= 2);
        cases[run.best.t_case.t] += 1;
        let total = recomputed_cost(inst, &sol.open);
        assert_eq!(total, sol.total_cost);
        let bound = knapsack_ratio(&inst.gamma(), &inst.epsilon);
        assert!(exact.opt_cost <= total, "instance {k}: rounding beats the optimum");
        assert!(total <= &bound * &exact.opt_cost, "instance {k}: {total} > {bound} * {}", exact.opt_cost);
        if exact.opt_cost.is_positive() {
            worst = worst.max((&total / &exact.opt_cost).to_f64());
        }
        shared.certificate.merge(&run.certificate);
    }
    let t_seen = shared.certificate.checks.get("tight_count").copied().unwrap_or(0);
    format!(
        "100 instances within B_k = {:.3}, all weight-feasible; worst ratio {worst:.4}; winning T counts {cases:?}; T checked on {t_seen} exits",
        knapsack_ratio(&q(31, 10), &q(1, 20)).to_f64()
    )
}

fn criterion_5() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let quantum = q(1, 1_000_000);
    for trial in 0..1000 {
        let n = rng.gen_range(1..=8);
        let mut dists: Vec<Rational> = vec![ri(0)];
        dists.extend((1..n).map(|_| q(rng.gen_range(0..=200), rng.gen_range(1..=8))));
        let opt = q(rng.gen_range(0..=400), rng.gen_range(1..=8));
        let delta = kumar_delta(&dists, &opt);
        let load = |d: &Rational| -> Rational { dists.iter().map(|x| (d - x).max(ri(0))).sum() };
        assert!(load(&delta) <= opt, "trial {trial}: load at delta exceeds the guess");
        assert!(load(&(&delta + &quantum)) > opt, "trial {trial}: delta is not maximal");
    }
    let base = ri(1) + q(1, 20);
    let mut worst_slack = i64::MAX;
    for inst in knapsack_instances() {
        let lb = inst
            .open_cost
            .iter()
            .filter(|f| f.is_positive())
            .chain((0..inst.clients.len()).flat_map(|j| (0..inst.facilities.len()).map(move |i| (j, i))).map(|(j, i)| inst.d(j, i)).filter(|d| d.is_positive()))
            .min()
            .cloned()
            .unwrap();
        let mut ub: Rational = inst.open_cost.iter().sum();
        for j in 0..inst.clients.len() {
            let mut ds: Vec<Rational> = (0..inst.facilities.len()).map(|i| inst.d(j, i).clone()).collect();
            ds.sort();
            ub += ds.iter().rev().take(inst.r).sum::<Rational>();
        }
        let ratio = &ub / &lb;
        let mut steps = 0i64;
        while base.pow(steps as i32) < ratio {
            steps += 1;
        }
        let cap = (steps + 2) * (steps + 2);
        let (opt, opt_f) = grid_axes(&inst, &q(1, 20));
        let size = (opt.len() * opt_f.len()) as i64;
        assert!(size <= cap, "grid of {size} exceeds {cap}");
        worst_slack = worst_slack.min(cap - size);
    }
    format!("1000 maximality checks passed; grid cardinality within bound on 100 instances (min slack {worst_slack})")
}

fn ftclust(args: &[&str]) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_ftclust")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn criterion_6(shared: &mut Shared) -> String {
    let dir = tempfile::tempdir().unwrap();
    let single = write(
        dir.path(),
        "single.json",
        r#"{"clients":[{"id":"c","coords":[0,0]}],"facilities":[{"id":"f","coords":[3,4]}],"r":1,"constraint":{"matroid":{"free":{}}}}"#,
    );
    let (code, out) = ftclust(&["solve", &single]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(report["solution"]["total_cost"], "5");
    assert_eq!(report["ratio"], "1");

    let rank = write(
        dir.path(),
        "rank.json",
        r#"{"clients":[{"id":"c","coords":[0]}],"facilities":[{"id":"a","coords":[1]},{"id":"b","coords":[2]}],"r":2,"constraint":{"matroid":{"uniform":{"k":1}}}}"#,
    );
    assert_eq!(ftclust(&["solve", &rank]).0, 2);
    assert_eq!(ftclust(&["compare", &rank]).0, 2);
    let budget = write(
        dir.path(),
        "budget.json",
        r#"{"clients":[{"id":"c","coords":[0]}],"facilities":[{"id":"a","coords":[1]},{"id":"b","coords":[2]}],"r":2,"constraint":{"knapsack":{"weights":{"a":3,"b":3},"budget":5}}}"#,
    );
    assert_eq!(ftclust(&["solve", &budget]).0, 2);
    assert_eq!(ftclust(&["compare", &budget]).0, 2);

    // every client sits on a facility, so no client is dangerous
    let mut safe = 0;
    for seed in 0..40u64 {
        let inst = gen_random(9000 + seed, 5, 6, 1 + seed as usize % 3, ConstraintKind::Matroid).unwrap();
        let run = solve_matroid(&inst).unwrap();
        if run.stats.dangerous != 0 {
            continue;
        }
        assert_eq!(run.stats.representatives, 0);
        assert_eq!(run.stats.solves, 1);
        let exact = exact_solve(&inst, 20).unwrap();
        let lb = lp_lower_bound(&inst, &exact).unwrap();
        assert!(lb <= exact.opt_cost && exact.opt_cost <= run.solution.total_cost);
        assert!(run.solution.total_cost <= &matroid_ratio(&inst.gamma()) * &fractional_cost(&inst));
        shared.certificate.merge(&run.certificate);
        safe += 1;
    }
    assert!(safe > 0);
    format!("single pair costs 5; rank and budget deficits exit 2; {safe} instances without dangerous clients certified")
}

fn criterion_7() -> String {
    let dir = tempfile::tempdir().unwrap();
    let mut checked = 0;
    for (kind, seed) in [("partition", "4"), ("knapsack", "8")] {
        let inst = dir.path().join(format!("{kind}.json"));
        let inst = inst.to_str().unwrap();
        let gen = ["gen", "--seed", seed, "--clients", "6", "--facilities", "6", "--r", "2", "--kind", kind, "--out", inst];
        assert_eq!(ftclust(&gen).0, 0);
        for cmd in ["solve", "compare"] {
            let first = ftclust(&[cmd, inst, "--delta", "0.1"]);
            let second = ftclust(&[cmd, inst, "--delta", "0.1"]);
            assert_eq!(first.0, 0);
            assert!(first == second, "{cmd} on {kind} differs between runs");
            checked += 1;
        }
    }
    format!("{checked} command/instance pairs byte-identical across two runs")
}

fn main() {
    let mut shared = Shared {
        certificate: Certificate::new(),
    };
    let mut lines: BTreeMap<u32, (bool, String)> = BTreeMap::new();
    let mut run = |n: u32, f: &mut dyn FnMut() -> String| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let secs = start.elapsed().as_secs_f64();
        let line = match &outcome {
            Ok(detail) => format!("criterion {n}: PASS ({secs:.1}s) {detail}"),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                format!("criterion {n}: FAIL ({secs:.1}s) {msg}")
            }
        };
        lines.insert(n, (outcome.is_ok(), line));
    };
    run(1, &mut || criterion_1(&mut shared));
    run(2, &mut criterion_2);
    run(4, &mut || criterion_4(&mut shared));
    run(5, &mut criterion_5);
    run(6, &mut || criterion_6(&mut shared));
    run(7, &mut criterion_7);
    // aggregates the certificates collected by 1, 4 and 6
    run(3, &mut || criterion_3(&mut shared));
    println!();
    for (_, line) in lines.values() {
        println!("{line}");
    }
    if lines.values().any(|(ok, _)| !ok) {
        std::process::exit(1);
    }
}
