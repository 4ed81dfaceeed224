//! Fault-tolerant knapsack median.
//!
//! The driver guesses the optimum and its opening-cost share on a geometric
//! grid. Each guess bounds every client's service radius, solves the
//! strengthened relaxation, runs the shared bundling and iterative rounding,
//! and repairs the at most two fractional facilities left by the weight row.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::bundling::{alg_bundle, BundleState};
use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::filtering::filter;
use crate::flow::FlowNetwork;
use crate::instance::{Instance, SideConstraint, Solution};
use crate::iterative::{alg_iterative, Side};
use crate::lp::{solve_vertex, LpError, Relation};
use crate::pipeline::{finish, open_originals, stats, Dumps, RunStats};
use crate::prep::{infeasible_instance, split_facilities, Fractional, NaturalLp, SplitState};
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GuessPair {
    pub opt: Rational,
    pub opt_f: Rational,
}

/// Smallest `k` with `base^k >= x`, for `x > 0` and `base > 1`.
fn ceil_log(base: &Rational, x: &Rational) -> i32 {
    let est = (x.to_f64().ln() / base.to_f64().ln()).ceil();
    let mut k = if est.is_finite() { est as i32 } else { 0 };
    while base.pow(k) < *x {
        k += 1;
    }
    while base.pow(k - 1) >= *x {
        k -= 1;
    }
    k
}

/// `0` followed by the powers of `base` needed to bracket every value in
/// `[lo, hi]` from above within a factor `base`.
fn axis(base: &Rational, lo: Option<&Rational>, hi: &Rational) -> Vec<Rational> {
    let mut out = vec![Rational::zero()];
    if let Some(lo) = lo {
        for k in ceil_log(base, lo)..=ceil_log(base, hi) {
            out.push(base.pow(k));
        }
    }
    out
}

/// The two grid axes: candidate optima and candidate opening-cost shares.
pub fn grid_axes(inst: &Instance, eps: &Rational) -> (Vec<Rational>, Vec<Rational>) {
    let base = Rational::one() + eps;
    let f_total: Rational = inst.open_cost.iter().sum();
    let min_f = inst.open_cost.iter().filter(|f| f.is_positive()).min().cloned();
    let mut ub = f_total.clone();
    let mut min_d: Option<Rational> = None;
    for j in 0..inst.n_clients() {
        let mut ds: Vec<Rational> = (0..inst.n_facilities()).map(|i| inst.d(j, i).clone()).collect();
        ds.sort();
        ub += ds.iter().rev().take(inst.r).sum::<Rational>();
        if let Some(d) = ds.iter().find(|d| d.is_positive()) {
            min_d = Some(min_d.map_or(d.clone(), |m| m.min(d.clone())));
        }
    }
    let lb = match (min_f.clone(), min_d) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let opt = axis(&base, lb.as_ref(), &ub);
    let opt_f = axis(&base, min_f.as_ref(), &f_total);
    (opt, opt_f)
}

pub fn guess_grid(inst: &Instance, eps: &Rational) -> Vec<GuessPair> {
    let (opt, opt_f) = grid_axes(inst, eps);
    opt.iter()
        .flat_map(|o| {
            opt_f.iter().map(move |f| GuessPair {
                opt: o.clone(),
                opt_f: f.clone(),
            })
        })
        .collect()
}

/// Largest `delta >= 0` with `sum_k max(0, delta - dists[k]) <= opt`.
pub fn kumar_delta(dists: &[Rational], opt: &Rational) -> Rational {
    let mut d = dists.to_vec();
    d.sort();
    let mut prefix = Rational::zero();
    for m in 0..d.len() {
        prefix += &d[m];
        // on the segment where exactly the first m + 1 terms are positive
        let delta = (opt + &prefix) / Rational::from(m + 1);
        if m + 1 == d.len() || delta <= d[m + 1] {
            return delta.max(Rational::zero());
        }
    }
    opt.clone()
}

pub fn kumar_deltas(inst: &Instance, opt: &Rational) -> Vec<Rational> {
    (0..inst.n_clients())
        .map(|j| {
            let dists: Vec<Rational> = (0..inst.n_clients()).map(|k| inst.d_clients(j, k).clone()).collect();
            kumar_delta(&dists, opt)
        })
        .collect()
}

fn knapsack_parts(inst: &Instance) -> Result<(&[Rational], &Rational)> {
    match &inst.constraint {
        SideConstraint::Knapsack { weights, budget } => Ok((weights, budget)),
        SideConstraint::Matroid(_) => Err(Error::Schema("instance has a matroid constraint, not a knapsack".into())),
    }
}

/// The relaxation with the weight row, restricted to the allowed pairs and
/// facilities. `None` when infeasible.
fn solve_restricted(
    inst: &Instance,
    allow_x: impl Fn(usize, usize) -> bool,
    allow_y: impl Fn(usize) -> bool,
) -> Result<Option<Fractional>> {
    let (weights, budget) = knapsack_parts(inst)?;
    let mut nat = NaturalLp::new(inst, allow_x, allow_y);
    let coeffs = nat.y_var.iter().zip(weights).map(|(&v, w)| (v, w.clone())).collect();
    nat.lp.add_constraint("weight", coeffs, Relation::Le, budget.clone());
    match solve_vertex(&nat.lp) {
        Ok(sol) => Ok(Some(nat.extract(&sol.values, sol.objective))),
        Err(LpError::Infeasible) => Ok(None),
        Err(LpError::Unbounded) => Err(Error::internal("relaxation_bounded", "knapsack relaxation reported unbounded")),
    }
}

/// The relaxation for one guess: far assignments and expensive facilities
/// are forbidden.
pub fn solve_klp(inst: &Instance, deltas: &[Rational], opt_f: &Rational) -> Result<Option<Fractional>> {
    solve_restricted(inst, |j, i| inst.d(j, i) <= &deltas[j], |i| inst.open_cost[i] <= *opt_f)
}

/// Optimum of the plain relaxation with the weight row, a lower bound on
/// every integral solution.
pub fn natural_lower_bound(inst: &Instance) -> Result<Rational> {
    solve_restricted(inst, |_, _| true, |_| true)?
        .map(|f| f.objective)
        .ok_or_else(infeasible_instance)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TCase {
    pub t: usize,
    /// Originals whose copies carry a strictly fractional total.
    pub nontight: Vec<usize>,
    /// Copy ids `i_0, i_1, ...`: even-odd pairs share a bundle, odd-even
    /// pairs are copies of one facility.
    pub chain: Vec<usize>,
}

fn fractional(v: &Rational) -> bool {
    v.is_positive() && *v < Rational::one()
}

/// Counts the non-tight facilities and rebuilds the alternating chain of
/// fractional copies.
pub fn classify_t(split: &SplitState, bund: &BundleState, z: &[Rational], weights: &[Rational], cert: &mut Certificate) -> Result<TCase> {
    let live = split.live();
    let mut mass: BTreeMap<usize, Rational> = BTreeMap::new();
    let mut frac_copies: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &c in &live {
        *mass.entry(split.origin(c)).or_insert_with(Rational::zero) += &z[c];
        if fractional(&z[c]) {
            frac_copies.entry(split.origin(c)).or_default().push(c);
        }
    }
    let nontight: Vec<usize> = mass.iter().filter(|(_, m)| fractional(m)).map(|(&i, _)| i).collect();
    let t = nontight.len();
    cert.require("tight_count", t <= 2, || format!("{t} non-tight facilities"))?;
    let all_frac: BTreeSet<usize> = frac_copies.values().flatten().copied().collect();
    if t == 0 {
        return Ok(TCase {
            t,
            nontight,
            chain: Vec::new(),
        });
    }
    let bundle_of: BTreeMap<usize, usize> = bund
        .live_bundles()
        .flat_map(|b| bund.bundles[b].members.iter().map(move |&c| (c, b)))
        .collect();
    let broken = |why: String| Error::internal("chain_reconstruction", why);
    let start = match frac_copies.get(&nontight[0]).map(Vec::as_slice) {
        Some(&[c]) => c,
        other => return Err(broken(format!("non-tight facility {} has fractional copies {other:?}", nontight[0]))),
    };
    let mut chain = vec![start];
    loop {
        let c = *chain.last().expect("chain starts nonempty");
        let next = if chain.len() % 2 == 1 {
            let Some(&b) = bundle_of.get(&c) else { break };
            let others: Vec<usize> = bund.bundles[b].members.iter().copied().filter(|&o| o != c && fractional(&z[o])).collect();
            match others.as_slice() {
                &[o] => o,
                _ => return Err(broken(format!("bundle {b} pairs copy {c} with {others:?}"))),
            }
        } else {
            let i = split.origin(c);
            if nontight.contains(&i) {
                break;
            }
            let others: Vec<usize> = frac_copies[&i].iter().copied().filter(|&o| o != c).collect();
            match others.as_slice() {
                &[o] => o,
                _ => return Err(broken(format!("facility {i} pairs copy {c} with {others:?}"))),
            }
        };
        if chain.contains(&next) {
            return Err(broken(format!("chain revisits copy {next}")));
        }
        chain.push(next);
    }
    let ok_shape = match t {
        1 => chain.len() % 2 == 1,
        _ => chain.len() % 2 == 0 && split.origin(*chain.last().expect("nonempty")) == nontight[1],
    };
    cert.require("chain_shape", ok_shape, || format!("T = {t} with chain {chain:?}"))?;
    let covered: BTreeSet<usize> = chain.iter().copied().collect();
    cert.require("chain_covers_fractional", covered == all_frac, || {
        format!("chain {chain:?} misses fractional copies {:?}", all_frac.difference(&covered).collect::<Vec<_>>())
    })?;
    for w in chain.windows(2) {
        let sum = &z[w[0]] + &z[w[1]];
        cert.require("chain_pairs_sum_to_one", sum.is_one(), || format!("copies {w:?} sum to {sum}"))?;
    }
    if t == 2 {
        let (a, b) = (split.origin(chain[0]), split.origin(*chain.last().expect("nonempty")));
        if weights[a] < weights[b] {
            chain.reverse();
        }
    }
    Ok(TCase { t, nontight, chain })
}

/// Opens the odd positions of the chain and closes the even ones.
pub fn round_chain(z: &[Rational], chain: &[usize]) -> Vec<Rational> {
    let mut zhat = z.to_vec();
    for (p, &c) in chain.iter().enumerate() {
        zhat[c] = if p % 2 == 1 { Rational::one() } else { Rational::zero() };
    }
    zhat
}

/// Routes one unit per fractional facility through its copies into the
/// fractional bundles, then opens the copy each unit went through and
/// shrinks every fractional bundle to the copy that fed it.
pub fn round_flow(split: &SplitState, bund: &mut BundleState, z: &[Rational], cert: &mut Certificate) -> Result<Vec<Rational>> {
    let frac: Vec<usize> = split.live().into_iter().filter(|&c| fractional(&z[c])).collect();
    let mut zhat = z.to_vec();
    if frac.is_empty() {
        return Ok(zhat);
    }
    let frac_set: BTreeSet<usize> = frac.iter().copied().collect();
    let originals: Vec<usize> = frac.iter().map(|&c| split.origin(c)).collect::<BTreeSet<_>>().into_iter().collect();
    let bundles: Vec<usize> = bund
        .live_bundles()
        .filter(|&b| !bund.bundles[b].members.is_disjoint(&frac_set))
        .collect();
    for &b in &bundles {
        cert.require("fractional_bundles_supported", bund.bundles[b].members.is_subset(&frac_set), || {
            format!("bundle {b} mixes fractional and integral copies")
        })?;
    }
    cert.require("flow_dummy_capacity", originals.len() >= bundles.len(), || {
        format!("{} fractional facilities for {} bundles", originals.len(), bundles.len())
    })?;
    let (s, t) = (0, 1);
    let o_node = |k: usize| 2 + k;
    let u_node = |k: usize| 2 + originals.len() + k;
    let v_node = |k: usize| 2 + originals.len() + frac.len() + k;
    let dummy = 2 + originals.len() + frac.len() + bundles.len();
    let mut g = FlowNetwork::new(dummy + 1);
    for k in 0..originals.len() {
        g.add_edge(s, o_node(k), 1);
    }
    let mut copy_edge = Vec::new();
    for (k, &c) in frac.iter().enumerate() {
        let o = originals.binary_search(&split.origin(c)).expect("origin listed");
        copy_edge.push(g.add_edge(o_node(o), u_node(k), 1));
    }
    let mut bundle_edges = Vec::new();
    for (k, &c) in frac.iter().enumerate() {
        for (m, &b) in bundles.iter().enumerate() {
            if bund.bundles[b].members.contains(&c) {
                bundle_edges.push((c, m, g.add_edge(u_node(k), v_node(m), 1)));
            }
        }
        g.add_edge(u_node(k), dummy, 1);
    }
    for m in 0..bundles.len() {
        g.add_edge(v_node(m), t, 1);
    }
    g.add_edge(dummy, t, (originals.len() - bundles.len()) as u64);
    let value = g.max_flow(s, t);
    cert.require("flow_value", value == originals.len() as u64, || {
        format!("flow {value} for {} fractional facilities", originals.len())
    })?;
    for (k, &c) in frac.iter().enumerate() {
        zhat[c] = Rational::from(g.flow(copy_edge[k]) as i64);
    }
    for (m, &b) in bundles.iter().enumerate() {
        let into: Vec<usize> = bundle_edges.iter().filter(|&&(_, mm, e)| mm == m && g.flow(e) == 1).map(|&(c, _, _)| c).collect();
        cert.require("flow_fills_bundles", into.len() == 1, || format!("bundle {b} receives {} units", into.len()))?;
        bund.bundles[b].members = into.into_iter().collect();
    }
    Ok(zhat)
}

#[derive(Clone, Debug)]
pub struct GuessRun {
    pub guess: GuessPair,
    pub t_case: TCase,
    pub solution: Solution,
    pub lp_value: Rational,
    pub certificate: Certificate,
    pub stats: RunStats,
    pub dumps: Dumps,
}

/// Solves the relaxation for one guess and rounds it. `None` when the guess
/// leaves the relaxation infeasible.
pub fn solve_guess(inst: &Instance, guess: &GuessPair) -> Result<Option<GuessRun>> {
    let deltas = kumar_deltas(inst, &guess.opt);
    match solve_klp(inst, &deltas, &guess.opt_f)? {
        Some(frac) => round_knapsack(inst, guess, &frac).map(Some),
        None => Ok(None),
    }
}

/// Rounds a nearest-first fractional point that satisfies the weight row and
/// opens no facility costing more than `guess.opt_f`.
pub fn round_knapsack(inst: &Instance, guess: &GuessPair, frac: &Fractional) -> Result<GuessRun> {
    let (weights, budget) = knapsack_parts(inst)?;
    let mut cert = Certificate::new();
    let mut split = split_facilities(inst, frac, &mut cert)?;
    let split_dump = split.debug_json(inst);
    let filt = filter(inst, &split, &mut cert)?;
    let mut bund = alg_bundle(&mut split, &filt, &mut cert)?;
    let copies = split.copies.len();
    let side = Side::Knapsack {
        max_open_cost: guess.opt_f.clone(),
    };
    let out = alg_iterative(inst, &mut split, &filt, &mut bund, &side, &mut cert)?;
    let z = &out.z;
    let t_case = classify_t(&split, &bund, z, weights, &mut cert)?;
    let live = split.live();
    let copy_weight = |v: &[Rational]| -> Rational { live.iter().map(|&c| &weights[split.origin(c)] * &v[c]).sum() };
    let copy_cost = |v: &[Rational]| -> Rational { live.iter().map(|&c| &inst.open_cost[split.origin(c)] * &v[c]).sum() };
    let zhat = match t_case.t {
        0 => round_flow(&split, &mut bund, z, &mut cert)?,
        _ => round_chain(z, &t_case.chain),
    };
    let integral = live.iter().all(|&c| zhat[c].is_zero() || zhat[c].is_one());
    cert.require("rounded_integral", integral, || "fractional copy after repair".into())?;
    match t_case.t {
        1 => {
            let (before, after) = (copy_weight(z), copy_weight(&zhat));
            cert.require("single_repair_weight", after <= before, || format!("weight {after} above {before}"))?;
            let (before, after) = (copy_cost(z), copy_cost(&zhat));
            cert.require("single_repair_opening_cost", after <= before, || format!("opening cost {after} above {before}"))?;
        }
        2 => {
            let max_f = inst.open_cost.iter().filter(|f| **f <= guess.opt_f).max().cloned().unwrap_or_else(Rational::zero);
            let cap = copy_cost(z) + max_f;
            let after = copy_cost(&zhat);
            cert.require("double_repair_opening_cost", after <= cap, || format!("opening cost {after} above {cap}"))?;
        }
        _ => {}
    }
    for &c in &live {
        if zhat[c].is_zero() {
            split.alive[c] = false;
            for b in &mut bund.bundles {
                b.members.remove(&c);
            }
        }
    }
    let open_copies: BTreeSet<usize> = split.live().into_iter().filter(|&c| zhat[c].is_one()).collect();
    let open = open_originals(&split, &open_copies, &mut cert)?;
    let weight = inst.weight(&open);
    cert.require("weight_feasible", weight <= *budget, || format!("weight {weight} over budget {budget}"))?;
    let solution = finish(inst, &split, &filt, &bund, &open_copies, &open, &mut cert)?;
    Ok(GuessRun {
        guess: guess.clone(),
        t_case,
        solution,
        lp_value: split.lp_objective.clone(),
        stats: stats(&filt, &bund, &out, copies),
        certificate: cert,
        dumps: Dumps {
            split: split_dump,
            bundle_events: bund.events.clone(),
            rounding_events: out.events.clone(),
        },
    })
}

#[derive(Clone, Debug)]
pub struct KnapsackRun {
    pub best: GuessRun,
    /// Checks summed over every guess that ran.
    pub certificate: Certificate,
    pub grid_size: usize,
    pub distinct_guesses: usize,
    pub feasible_guesses: usize,
}

/// Guesses that restrict the relaxation identically are run once, keeping
/// the smallest pair in grid order. The service radii depend only on the
/// optimum and the allowed facilities only on the opening share, so each
/// axis is deduplicated on its own.
pub fn distinct_guesses(inst: &Instance, eps: &Rational) -> Vec<GuessPair> {
    let (opt, opt_f) = grid_axes(inst, eps);
    let mut seen_x = BTreeSet::new();
    let opt: Vec<Rational> = opt
        .into_iter()
        .filter(|o| {
            let deltas = kumar_deltas(inst, o);
            let x: Vec<Vec<bool>> = (0..inst.n_clients())
                .map(|j| (0..inst.n_facilities()).map(|i| inst.d(j, i) <= &deltas[j]).collect())
                .collect();
            seen_x.insert(x)
        })
        .collect();
    let mut seen_y = BTreeSet::new();
    let opt_f: Vec<Rational> = opt_f
        .into_iter()
        .filter(|f| seen_y.insert(inst.open_cost.iter().map(|c| c <= f).collect::<Vec<bool>>()))
        .collect();
    opt.iter()
        .flat_map(|o| {
            opt_f.iter().map(move |f| GuessPair {
                opt: o.clone(),
                opt_f: f.clone(),
            })
        })
        .collect()
}

/// Runs every distinct guess and returns the cheapest solution, ties by
/// grid order.
pub fn drive_knapsack(inst: &Instance) -> Result<KnapsackRun> {
    knapsack_parts(inst)?;
    let (opt, opt_f) = grid_axes(inst, &inst.epsilon);
    let guesses = distinct_guesses(inst, &inst.epsilon);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(guesses.len().max(1));
    let mut results: Vec<Option<Result<Option<GuessRun>>>> = (0..guesses.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let guesses = &guesses;
                scope.spawn(move || {
                    (w..guesses.len())
                        .step_by(workers)
                        .map(|k| (k, solve_guess(inst, &guesses[k])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (k, res) in h.join().expect("guess worker panicked") {
                results[k] = Some(res);
            }
        }
    });
    let mut certificate = Certificate::new();
    let mut best: Option<GuessRun> = None;
    let mut feasible = 0;
    for res in results.into_iter().map(|r| r.expect("every guess ran")) {
        let Some(run) = res? else { continue };
        feasible += 1;
        certificate.merge(&run.certificate);
        if best.as_ref().is_none_or(|b| run.solution.total_cost < b.solution.total_cost) {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(infeasible_instance)?;
    Ok(KnapsackRun {
        best,
        certificate,
        grid_size: opt.len() * opt_f.len(),
        distinct_guesses: guesses.len(),
        feasible_guesses: feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_random, ConstraintKind};
    use crate::prep::tests::line;
    use crate::rational::q;

    fn knap(mut inst: Instance, weights: &[i64], budget: i64) -> Instance {
        inst.constraint = SideConstraint::Knapsack {
            weights: weights.iter().map(|&w| Rational::from_integer(w)).collect(),
            budget: Rational::from_integer(budget),
        };
        inst
    }

    #[test]
    fn kumar_examples() {
        assert_eq!(kumar_delta(&[q(0, 1), q(3, 1), q(5, 1)], &q(4, 1)), q(7, 2));
        assert_eq!(kumar_delta(&[q(0, 1), q(3, 1), q(5, 1)], &q(0, 1)), q(0, 1));
        assert_eq!(kumar_delta(&[q(0, 1)], &q(7, 1)), q(7, 1));
    }

    #[test]
    fn zero_costs_give_single_share() {
        let inst = knap(line(&[0, 3], &[0, 10], 1), &[1, 1], 2);
        let (opt, opt_f) = grid_axes(&inst, &q(1, 10));
        assert_eq!(opt_f, vec![q(0, 1)]);
        assert!(opt.len() > 2);
        assert_eq!(opt[0], q(0, 1));
    }

    #[test]
    fn grid_brackets_every_value() {
        let inst = knap(line(&[0, 3], &[0, 10], 1), &[1, 1], 2);
        let (opt, _) = grid_axes(&inst, &q(1, 10));
        // smallest positive distance 3, largest service sum 10 + 7
        for v in 3..=17 {
            let v = Rational::from_integer(v);
            let bound = &v * &q(11, 10);
            assert!(opt.iter().any(|g| *g >= v && *g <= bound), "{v}");
        }
    }

    #[test]
    fn classify_single_chain() {
        // copies 0,1,2: bundle {0,1}, copies 1 and 2 of one facility
        let inst = knap(line(&[0], &[0, 1], 1), &[1, 1], 1);
        let frac = Fractional {
            x: vec![vec![q(1, 1), q(0, 1)]],
            y: vec![q(1, 1), q(0, 1)],
            objective: q(0, 1),
        };
        let mut cert = Certificate::new();
        let mut split = split_facilities(&inst, &frac, &mut cert).unwrap();
        let extra = split.split_copy(0, q(1, 2));
        assert_eq!(extra, 2);
        // copies 0 and 2 belong to facility 0, copy 1 to facility 1
        let bund = BundleState {
            bundles: vec![crate::bundling::Bundle {
                members: BTreeSet::from([1, 0]),
                creator: 0,
                shell: false,
                alive: true,
            }],
            queues: vec![vec![0]],
            initial_queue_len: vec![1],
            frozen: BTreeSet::new(),
            events: Vec::new(),
        };
        let z = vec![q(3, 5), q(2, 5), q(2, 5)];
        let tc = classify_t(&split, &bund, &z, &[q(1, 1), q(1, 1)], &mut cert).unwrap();
        assert_eq!(tc.t, 1);
        assert_eq!(tc.nontight, vec![1]);
        assert_eq!(tc.chain, vec![1, 0, 2]);
        let zhat = round_chain(&z, &tc.chain);
        assert_eq!(zhat, vec![q(1, 1), q(0, 1), q(0, 1)]);
    }

    fn two_facilities(y: [Rational; 2]) -> (Instance, SplitState) {
        let inst = knap(line(&[0], &[0, 1], 1), &[1, 1], 2);
        let frac = Fractional {
            x: vec![vec![q(1, 1), q(0, 1)]],
            y: y.to_vec(),
            objective: q(0, 1),
        };
        let split = split_facilities(&inst, &frac, &mut Certificate::new()).unwrap();
        (inst, split)
    }

    fn one_bundle(members: &[usize]) -> BundleState {
        BundleState {
            bundles: vec![crate::bundling::Bundle {
                members: members.iter().copied().collect(),
                creator: 0,
                shell: false,
                alive: true,
            }],
            queues: vec![vec![0]],
            initial_queue_len: vec![1],
            frozen: BTreeSet::new(),
            events: Vec::new(),
        }
    }

    #[test]
    fn classify_double_orients_by_weight() {
        let (_, split) = two_facilities([q(1, 1), q(1, 1)]);
        let bund = one_bundle(&[0, 1]);
        let z = vec![q(3, 10), q(7, 10)];
        let mut cert = Certificate::new();
        let heavy_first = classify_t(&split, &bund, &z, &[q(2, 1), q(1, 1)], &mut cert).unwrap();
        assert_eq!((heavy_first.t, heavy_first.chain.clone()), (2, vec![0, 1]));
        assert_eq!(round_chain(&z, &heavy_first.chain), vec![q(0, 1), q(1, 1)]);
        let light_first = classify_t(&split, &bund, &z, &[q(1, 1), q(2, 1)], &mut cert).unwrap();
        assert_eq!(light_first.chain, vec![1, 0]);
        let tie = classify_t(&split, &bund, &z, &[q(1, 1), q(1, 1)], &mut cert).unwrap();
        assert_eq!(tie.chain, vec![0, 1]);
    }

    #[test]
    fn flow_repairs_tight_fractional_copies() {
        let (_, mut split) = two_facilities([q(1, 1), q(1, 1)]);
        let a2 = split.split_copy(0, q(1, 2));
        let b2 = split.split_copy(1, q(1, 2));
        let mut bund = one_bundle(&[0, 1]);
        let half = q(1, 2);
        let z = vec![half.clone(), half.clone(), half.clone(), half];
        let mut cert = Certificate::new();
        assert_eq!(classify_t(&split, &bund, &z, &[q(1, 1), q(1, 1)], &mut cert).unwrap().t, 0);
        let zhat = round_flow(&split, &mut bund, &z, &mut cert).unwrap();
        assert_eq!(&zhat[0] + &zhat[a2], q(1, 1));
        assert_eq!(&zhat[1] + &zhat[b2], q(1, 1));
        let kept: Vec<usize> = bund.bundles[0].members.iter().copied().collect();
        assert_eq!(kept.len(), 1);
        assert!(zhat[kept[0]].is_one());
    }

    #[test]
    fn integral_point_is_untouched() {
        let (_, split) = two_facilities([q(1, 1), q(0, 1)]);
        let mut bund = one_bundle(&[0]);
        let z = vec![q(1, 1), q(0, 1)];
        let mut cert = Certificate::new();
        let tc = classify_t(&split, &bund, &z, &[q(1, 1), q(1, 1)], &mut cert).unwrap();
        assert_eq!((tc.t, tc.chain.len()), (0, 0));
        assert_eq!(round_flow(&split, &mut bund, &z, &mut cert).unwrap(), z);
    }

    #[test]
    fn mixtures_round_within_budget() {
        for seed in 0..40 {
            let r = 1 + (seed as usize % 3);
            let inst = gen_random(seed, 6, 6, r, ConstraintKind::Knapsack).unwrap();
            let frac = crate::prep::random_mixture(&inst, seed ^ 0x77).unwrap();
            let guess = GuessPair {
                opt: frac.objective.clone(),
                opt_f: inst.open_cost.iter().max().unwrap().clone(),
            };
            let run = round_knapsack(&inst, &guess, &frac).unwrap();
            let (_, budget) = knapsack_parts(&inst).unwrap();
            assert!(inst.weight(&run.solution.open) <= *budget);
        }
    }

    #[test]
    fn single_feasible_set() {
        // three facilities, only {0, 2} fits the budget with r = 2
        let inst = knap(line(&[0, 5], &[0, 1, 5], 2), &[2, 3, 2], 4);
        let run = drive_knapsack(&inst).unwrap();
        assert_eq!(run.best.solution.open, vec![0, 2]);
    }

    #[test]
    fn over_budget_is_infeasible() {
        let inst = knap(line(&[0], &[0, 1], 2), &[3, 3], 5);
        assert!(matches!(drive_knapsack(&inst), Err(Error::Infeasible(_))));
    }

    #[test]
    fn random_knapsack_instances() {
        let mut cases = [0usize; 3];
        for seed in 0..25 {
            let r = 1 + (seed as usize % 3);
            let inst = gen_random(seed, 5, 5, r, ConstraintKind::Knapsack).unwrap();
            let run = drive_knapsack(&inst).unwrap();
            let (_, budget) = knapsack_parts(&inst).unwrap();
            assert!(inst.weight(&run.best.solution.open) <= *budget);
            cases[run.best.t_case.t] += 1;
        }
        assert!(cases.iter().sum::<usize>() == 25);
    }
}
