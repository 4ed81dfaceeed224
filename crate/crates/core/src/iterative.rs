//! Iterative rounding over facility copies.
//!
//! The auxiliary LP keeps one variable per live copy, an equality per
//! bundle and a mass window around every unresolved ball. Each round solves
//! to a vertex, drops zero copies and resolves one ball whose window became
//! tight. The matroid variant adds rank constraints lazily; the knapsack
//! variant carries explicit copy and weight rows and may exit fractional.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::bundling::{Bundle, BundleState};
use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::filtering::FilterState;
use crate::instance::{Instance, SideConstraint};
use crate::lp::{solve_vertex, solve_with_matroid_cuts, CopyCut, LinearProgram, LpError, Relation};
use crate::prep::SplitState;
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Side {
    Matroid,
    /// Copies of facilities costing more than `max_open_cost` stay closed.
    Knapsack { max_open_cost: Rational },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// Ball window tight at `r`: the ball becomes `r` bundles.
    Full,
    /// Ball window tight at `r - 1`.
    Short,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoundEvent {
    pub client: usize,
    pub resolution: Resolution,
    pub objective_before: Rational,
    pub objective_after: Rational,
    pub removed_bundles: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct IterOutcome {
    /// Final value per copy id; dead copies hold zero.
    pub z: Vec<Rational>,
    pub d0: BTreeSet<usize>,
    pub d1: BTreeSet<usize>,
    pub events: Vec<RoundEvent>,
    pub objectives: Vec<Rational>,
    pub solves: usize,
    pub cuts: usize,
}

impl IterOutcome {
    pub fn resolved(&self, j: usize) -> bool {
        self.d0.contains(&j) || self.d1.contains(&j)
    }
}

struct Round<'a> {
    inst: &'a Instance,
    filt: &'a FilterState,
    d0: BTreeSet<usize>,
    d1: BTreeSet<usize>,
}

impl Round<'_> {
    fn undecided(&self) -> impl Iterator<Item = usize> + '_ {
        self.filt
            .d_prime
            .iter()
            .copied()
            .filter(|j| !self.d0.contains(j) && !self.d1.contains(j))
    }

    /// Objective coefficient of every live copy and the constant term.
    fn costs(&self, split: &SplitState, bund: &BundleState) -> (Vec<Rational>, Rational) {
        let r = split.r;
        let mut cost: Vec<Rational> = (0..split.copies.len())
            .map(|c| self.inst.open_cost[split.origin(c)].clone())
            .collect();
        let mut offset = Rational::zero();
        for j in self.undecided().collect::<Vec<_>>() {
            let n = Rational::from(self.filt.demand[j]);
            let rad = self.filt.radius[j].clone().expect("representative");
            for c in self.filt.ball(split, j) {
                cost[c] += &n * &(split.d(j, c) - &rad);
            }
            offset += &n * &(Rational::from(r) * &rad);
        }
        for (set, len) in [(&self.d0, r - 1), (&self.d1, r)] {
            for &j in set {
                let n = Rational::from(self.filt.demand[j]);
                for c in bund.queue_prefix(j, len) {
                    cost[c] += &n * split.d(j, c);
                }
            }
        }
        (cost, offset)
    }

    /// The objective written out term by term, evaluated at `z`.
    fn objective_at(&self, split: &SplitState, bund: &BundleState, z: &[Rational]) -> Rational {
        let r = split.r;
        let mut total: Rational = split.live().iter().map(|&c| &self.inst.open_cost[split.origin(c)] * &z[c]).sum();
        for j in self.undecided() {
            let n = Rational::from(self.filt.demand[j]);
            let rad = self.filt.radius[j].clone().expect("representative");
            let ball = self.filt.ball(split, j);
            let service: Rational = ball.iter().map(|&c| &z[c] * split.d(j, c)).sum();
            let mass: Rational = ball.iter().map(|&c| &z[c]).sum();
            total += n * (service + rad * (Rational::from(r) - mass));
        }
        for (set, len) in [(&self.d0, r - 1), (&self.d1, r)] {
            for &j in set {
                let n = Rational::from(self.filt.demand[j]);
                let service: Rational = bund.queue_prefix(j, len).iter().map(|&c| &z[c] * split.d(j, c)).sum();
                total += n * service;
            }
        }
        total
    }

    fn build(&self, split: &SplitState, bund: &BundleState, side: &Side) -> (LinearProgram, Vec<usize>) {
        let r = Rational::from(split.r);
        let live = split.live();
        let mut var = vec![usize::MAX; split.copies.len()];
        let (cost, offset) = self.costs(split, bund);
        let mut lp = LinearProgram::new();
        lp.objective_offset = offset;
        for &c in &live {
            let closed = match side {
                Side::Knapsack { max_open_cost } => self.inst.open_cost[split.origin(c)] > *max_open_cost,
                Side::Matroid => false,
            };
            let upper = if closed { Rational::zero() } else { Rational::one() };
            var[c] = lp.add_var(format!("z{c}"), Rational::zero(), Some(upper), cost[c].clone());
        }
        let row = |set: &mut dyn Iterator<Item = usize>| -> Vec<(usize, Rational)> {
            set.map(|c| (var[c], Rational::one())).collect()
        };
        for b in bund.live_bundles() {
            let coeffs = row(&mut bund.bundles[b].members.iter().copied());
            lp.add_constraint(format!("bundle{b}"), coeffs, Relation::Eq, Rational::one());
        }
        for j in self.undecided() {
            let coeffs = row(&mut self.filt.ball(split, j).into_iter());
            lp.add_constraint(format!("ball{j}_lo"), coeffs.clone(), Relation::Ge, &r - &Rational::one());
            lp.add_constraint(format!("ball{j}_hi"), coeffs, Relation::Le, r.clone());
        }
        if let (Side::Knapsack { .. }, SideConstraint::Knapsack { weights, budget }) = (side, &self.inst.constraint) {
            for i in 0..self.inst.n_facilities() {
                let copies: Vec<usize> = live.iter().copied().filter(|&c| split.origin(c) == i).collect();
                if copies.len() > 1 {
                    lp.add_constraint(format!("copies{i}"), row(&mut copies.into_iter()), Relation::Le, Rational::one());
                }
            }
            let coeffs = live.iter().map(|&c| (var[c], weights[split.origin(c)].clone())).collect();
            lp.add_constraint("weight", coeffs, Relation::Le, budget.clone());
        }
        (lp, var)
    }
}

/// Runs the rounding loop. `split` loses the copies rounded to zero and
/// `bund` is rewritten as balls resolve.
pub fn alg_iterative(
    inst: &Instance,
    split: &mut SplitState,
    filt: &FilterState,
    bund: &mut BundleState,
    side: &Side,
    cert: &mut Certificate,
) -> Result<IterOutcome> {
    let r = split.r;
    let mut round = Round {
        inst,
        filt,
        d0: BTreeSet::new(),
        d1: BTreeSet::new(),
    };
    let mut pool: Vec<CopyCut> = Vec::new();
    let mut out = IterOutcome {
        z: Vec::new(),
        d0: BTreeSet::new(),
        d1: BTreeSet::new(),
        events: Vec::new(),
        objectives: Vec::new(),
        solves: 0,
        cuts: 0,
    };

    let dangerous_share: Rational = filt
        .dangerous
        .iter()
        .map(|&k| Rational::from(r) * &split.stats[k].d_av)
        .sum();
    let initial_cap = &split.f_total + &dangerous_share;
    let y: Vec<Rational> = split.copies.iter().map(|c| c.mass.clone()).collect();
    let at_y = round.objective_at(split, bund, &y);
    cert.require("initial_objective_bound", at_y <= initial_cap, || {
        format!("objective at the fractional solution {at_y} exceeds {initial_cap}")
    })?;

    loop {
        let (lp, var) = round.build(split, bund, side);
        let solved = match (side, &inst.constraint) {
            (Side::Matroid, SideConstraint::Matroid(m)) => {
                let copy_vars: Vec<(usize, usize)> = split.live().iter().map(|&c| (var[c], split.origin(c))).collect();
                solve_with_matroid_cuts(&lp, m, inst.n_facilities(), &copy_vars, &mut pool).map(|(s, st)| {
                    out.cuts += st.added;
                    s
                })
            }
            (Side::Knapsack { .. }, SideConstraint::Knapsack { .. }) => solve_vertex(&lp),
            _ => return Err(Error::internal("rounding_side", "side constraint does not match the instance")),
        };
        let sol = match solved {
            Ok(s) => s,
            Err(LpError::Infeasible) => {
                return Err(Error::internal("rounding_lp_feasible", "auxiliary LP became infeasible"));
            }
            Err(LpError::Unbounded) => {
                return Err(Error::internal("rounding_lp_feasible", "auxiliary LP reported unbounded"));
            }
        };
        out.solves += 1;
        let mut z = vec![Rational::zero(); split.copies.len()];
        for c in split.live() {
            z[c] = sol.values[var[c]].clone();
        }
        let direct = round.objective_at(split, bund, &z);
        cert.require("objective_consistent", direct == sol.objective, || {
            format!("solver objective {} but direct evaluation {direct}", sol.objective)
        })?;
        if out.solves == 1 {
            cert.require("initial_objective_bound", sol.objective <= initial_cap, || {
                format!("initial optimum {} exceeds {initial_cap}", sol.objective)
            })?;
        }
        out.objectives.push(sol.objective.clone());

        for c in split.live() {
            if z[c].is_zero() {
                split.alive[c] = false;
                for b in &mut bund.bundles {
                    b.members.remove(&c);
                }
            }
        }

        let r_q = Rational::from(r);
        let ball_mass = |split: &SplitState, j: usize| -> Rational { filt.ball(split, j).iter().map(|&c| &z[c]).sum() };
        let undecided: Vec<usize> = round.undecided().collect();
        let full = undecided.iter().copied().find(|&j| ball_mass(split, j) == r_q);
        let short = undecided
            .iter()
            .copied()
            .find(|&j| ball_mass(split, j) == &r_q - &Rational::one());
        let before = round.objective_at(split, bund, &z);
        if let Some(j) = full {
            let removed = resolve_full(split, filt, bund, j, cert)?;
            round.d1.insert(j);
            let after = round.objective_at(split, bund, &z);
            cert.require("full_ball_objective", after == before, || {
                format!("resolving client {j} moved the objective from {before} to {after}")
            })?;
            out.events.push(RoundEvent {
                client: j,
                resolution: Resolution::Full,
                objective_before: before,
                objective_after: after,
                removed_bundles: removed,
            });
        } else if let Some(j) = short {
            round.d0.insert(j);
            let after = round.objective_at(split, bund, &z);
            let drop = Rational::from(filt.demand[j]) * filt.radius[j].as_ref().expect("representative");
            cert.require("short_ball_objective", &before - &after == drop, || {
                format!("resolving client {j} dropped the objective by {} instead of {drop}", &before - &after)
            })?;
            out.events.push(RoundEvent {
                client: j,
                resolution: Resolution::Short,
                objective_before: before,
                objective_after: after,
                removed_bundles: Vec::new(),
            });
        } else {
            out.z = z;
            break;
        }
        check_queues_live(bund, cert)?;
    }

    cert.require("solve_count", out.solves <= filt.d_prime.len() + 1, || {
        format!("{} solves for {} representatives", out.solves, filt.d_prime.len())
    })?;
    if let Side::Matroid = side {
        let integral = out.z.iter().all(|v| v.is_zero() || v.is_one());
        cert.require("final_integral", integral, || "fractional copy at exit".into())?;
        let unresolved: Vec<usize> = round.undecided().collect();
        cert.require("all_resolved", unresolved.is_empty(), || {
            format!("representatives {unresolved:?} unresolved at exit")
        })?;
    }
    out.d0 = round.d0;
    out.d1 = round.d1;
    Ok(out)
}

/// Replaces the `r`-th queue entry of `j` by the part of its ball outside
/// the first `r - 1` bundles and drops every bundle that part touches.
fn resolve_full(
    split: &SplitState,
    filt: &FilterState,
    bund: &mut BundleState,
    j: usize,
    cert: &mut Certificate,
) -> Result<Vec<usize>> {
    let r = split.r;
    let prefix = bund.queue_prefix(j, r - 1);
    let fresh: BTreeSet<usize> = filt.ball(split, j).difference(&prefix).copied().collect();
    let removed: Vec<usize> = bund
        .live_bundles()
        .filter(|&b| !bund.bundles[b].members.is_disjoint(&fresh))
        .collect();
    for &b in &removed {
        cert.require("removed_bundles_are_shells", bund.bundles[b].shell, || {
            format!("bundle {b} removed while resolving client {j} is not a shell")
        })?;
        bund.bundles[b].alive = false;
    }
    let id = bund.bundles.len();
    bund.bundles.push(Bundle {
        members: fresh,
        creator: j,
        shell: false,
        alive: true,
    });
    bund.queues[j][r - 1] = id;
    for &w in &filt.d_prime {
        if removed.contains(&bund.queues[w][r - 1]) {
            bund.queues[w][r - 1] = id;
        }
    }
    Ok(removed)
}

fn check_queues_live(bund: &BundleState, cert: &mut Certificate) -> Result<()> {
    for (j, q) in bund.queues.iter().enumerate() {
        for &b in q {
            cert.require("queues_reference_live_bundles", bund.bundles[b].alive, || {
                format!("client {j} still queues removed bundle {b}")
            })?;
        }
    }
    Ok(())
}
