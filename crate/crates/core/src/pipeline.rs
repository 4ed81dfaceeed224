//! End-to-end rounding for the matroid variant and the final checks shared
//! with the knapsack variant.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::bundling::{alg_bundle, BundleEvent, BundleState};
use crate::certificate::{dangerous_factor, matroid_bound, safe_factor, Certificate};
use crate::error::{Error, Result};
use crate::filtering::{filter, FilterState};
use crate::instance::{Instance, Solution};
use crate::iterative::{alg_iterative, IterOutcome, RoundEvent, Side};
use crate::prep::{solve_mlp, split_facilities, Fractional, SplitState};
use crate::rational::Rational;

/// Counts describing one rounding run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub copies: usize,
    pub dangerous: usize,
    pub representatives: usize,
    pub short: usize,
    pub full: usize,
    pub bundles: usize,
    pub frozen: usize,
    pub solves: usize,
    pub cuts: usize,
}

/// Intermediate state kept for debugging output.
#[derive(Clone, Debug, Serialize)]
pub struct Dumps {
    pub split: serde_json::Value,
    pub bundle_events: Vec<BundleEvent>,
    pub rounding_events: Vec<RoundEvent>,
}

#[derive(Clone, Debug)]
pub struct RoundingRun {
    pub solution: Solution,
    /// Objective of the fractional point the run started from.
    pub lp_value: Rational,
    /// Certified ratio against `lp_value`.
    pub bound: Rational,
    pub certificate: Certificate,
    pub stats: RunStats,
    pub dumps: Dumps,
}

/// Solves the relaxation and rounds its optimal vertex.
pub fn solve_matroid(inst: &Instance) -> Result<RoundingRun> {
    let frac = solve_mlp(inst)?;
    round_matroid(inst, &frac)
}

/// Rounds any feasible fractional point of the matroid relaxation whose
/// clients are served nearest-first.
pub fn round_matroid(inst: &Instance, frac: &Fractional) -> Result<RoundingRun> {
    let matroid = inst
        .matroid()
        .ok_or_else(|| Error::Schema("instance has a knapsack constraint, not a matroid".into()))?;
    let mut cert = Certificate::new();
    let mut split = split_facilities(inst, frac, &mut cert)?;
    let split_dump = split.debug_json(inst);
    let filt = filter(inst, &split, &mut cert)?;
    let mut bund = alg_bundle(&mut split, &filt, &mut cert)?;
    let copies = split.copies.len();
    let out = alg_iterative(inst, &mut split, &filt, &mut bund, &Side::Matroid, &mut cert)?;
    let open_copies: BTreeSet<usize> = split.live().into_iter().filter(|&c| out.z[c].is_one()).collect();
    let open = open_originals(&split, &open_copies, &mut cert)?;
    cert.require("independent", matroid.is_independent(&open), || format!("{open:?} is dependent"))?;
    let solution = finish(inst, &split, &filt, &bund, &open_copies, &open, &mut cert)?;
    let bound = matroid_bound(&filt.gamma);
    cert.require("cost_bound", solution.total_cost <= &bound * &split.lp_objective, || {
        format!("cost {} exceeds {} times {}", solution.total_cost, bound, split.lp_objective)
    })?;
    Ok(RoundingRun {
        solution,
        lp_value: split.lp_objective.clone(),
        bound,
        stats: stats(&filt, &bund, &out, copies),
        certificate: cert,
        dumps: Dumps {
            split: split_dump,
            bundle_events: bund.events.clone(),
            rounding_events: out.events.clone(),
        },
    })
}

pub(crate) fn stats(filt: &FilterState, bund: &BundleState, out: &IterOutcome, copies: usize) -> RunStats {
    RunStats {
        copies,
        dangerous: filt.dangerous.len(),
        representatives: filt.d_prime.len(),
        short: out.d0.len(),
        full: out.d1.len(),
        bundles: bund.live_bundles().count(),
        frozen: bund.frozen.len(),
        solves: out.solves,
        cuts: out.cuts,
    }
}

/// Originals of the open copies; at most one copy of each may be open.
pub(crate) fn open_originals(split: &SplitState, open_copies: &BTreeSet<usize>, cert: &mut Certificate) -> Result<Vec<usize>> {
    let mut per: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in open_copies {
        *per.entry(split.origin(c)).or_insert(0) += 1;
    }
    for (&i, &n) in &per {
        cert.require("one_copy_per_original", n == 1, || format!("{n} copies of facility {i} open"))?;
    }
    Ok(per.into_keys().collect())
}

/// Checks the distance guarantees on the final bundles, then evaluates the
/// opened facilities.
pub(crate) fn finish(
    inst: &Instance,
    split: &SplitState,
    filt: &FilterState,
    bund: &BundleState,
    open_copies: &BTreeSet<usize>,
    open: &[usize],
    cert: &mut Certificate,
) -> Result<Solution> {
    let r = split.r;
    cert.require("enough_open", open.len() >= r, || format!("only {} facilities open", open.len()))?;
    let live: Vec<usize> = bund.live_bundles().collect();
    for &b in &live {
        let n = bund.bundles[b].members.intersection(open_copies).count();
        cert.require("bundle_has_open_copy", n == 1, || format!("bundle {b} has {n} open copies"))?;
    }
    check_dangerous_coverage(split, filt, bund, cert)?;
    check_safe_witnesses(split, filt, bund, cert)?;
    inst.evaluate(open)
}

fn reach(split: &SplitState, j: usize, members: &BTreeSet<usize>) -> Rational {
    split.d_max_to(j, members)
}

/// Every representative keeps at least `r - 1` bundles inside its ball and
/// its `r`-th nearest bundle within the dangerous factor of its radius.
pub(crate) fn check_dangerous_coverage(split: &SplitState, filt: &FilterState, bund: &BundleState, cert: &mut Certificate) -> Result<()> {
    let r = split.r;
    let factor = dangerous_factor(&filt.gamma);
    for &j in &filt.d_prime {
        let ball = filt.ball(split, j);
        let inside = bund.live_bundles().filter(|&b| bund.bundles[b].members.is_subset(&ball)).count();
        cert.require("dangerous_bundles_in_ball", inside + 1 >= r, || {
            format!("representative {j} keeps {inside} bundles in its ball")
        })?;
        let mut dists: Vec<Rational> = bund.live_bundles().map(|b| reach(split, j, &bund.bundles[b].members)).collect();
        dists.sort();
        let cap = &factor * &split.stats[j].d_max;
        let ok = dists.get(r - 1).is_some_and(|d| *d <= cap);
        cert.require("dangerous_bundle_coverage", ok, || {
            format!("representative {j}: r-th bundle at {:?}, cap {cap}", dists.get(r - 1).map(ToString::to_string))
        })?;
    }
    cert.note("dangerous_bundle_coverage");
    Ok(())
}

/// Every safe client finds `r` distinct bundles within `3 d_max^t` for
/// `t < r` and within the safe factor of `d_max^r` for the last one.
pub(crate) fn check_safe_witnesses(split: &SplitState, filt: &FilterState, bund: &BundleState, cert: &mut Certificate) -> Result<()> {
    let r = split.r;
    let three = Rational::from(3i64);
    let last = safe_factor(&filt.gamma);
    for j in (0..split.n_clients()).filter(|&j| !filt.is_dangerous(j)) {
        let st = &split.stats[j];
        let caps: Vec<Rational> = (0..r)
            .map(|t| if t + 1 < r { &three * &st.d_max_t[t] } else { &last * &st.d_max_t[t] })
            .collect();
        let mut dists: Vec<Rational> = bund.live_bundles().map(|b| reach(split, j, &bund.bundles[b].members)).collect();
        dists.sort();
        // caps are nondecreasing, so matching sorted distances in order is optimal
        let ok = dists.len() >= r && dists.iter().zip(&caps).all(|(d, c)| d <= c);
        cert.require("safe_bundle_witnesses", ok, || {
            format!(
                "safe client {j}: bundle distances {:?} against caps {:?}",
                dists.iter().take(r).map(ToString::to_string).collect::<Vec<_>>(),
                caps.iter().map(ToString::to_string).collect::<Vec<_>>()
            )
        })?;
    }
    cert.note("safe_bundle_witnesses");
    Ok(())
}
