//! Exact solutions by enumeration and relaxation lower bounds, for checking
//! the rounding on small instances.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Instance, SideConstraint};
use crate::knapsack::{kumar_deltas, solve_klp};
use crate::prep::{infeasible_instance, solve_mlp};
use crate::rational::Rational;

pub const DEFAULT_GUARD: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExactResult {
    pub opt_set: Vec<usize>,
    pub opt_cost: Rational,
    /// Feasible sets whose cost was evaluated; subtrees whose opening cost
    /// alone exceeds the incumbent are skipped.
    pub enumerated: u64,
}

struct Search<'a> {
    inst: &'a Instance,
    by_distance: Vec<Vec<usize>>,
    chosen: Vec<usize>,
    in_set: Vec<bool>,
    best: Option<(Rational, Vec<usize>)>,
    enumerated: u64,
}

impl Search<'_> {
    fn service(&self) -> Rational {
        let r = self.inst.r;
        self.by_distance
            .iter()
            .enumerate()
            .map(|(j, order)| {
                order
                    .iter()
                    .filter(|&&i| self.in_set[i])
                    .take(r)
                    .map(|&i| self.inst.d(j, i))
                    .sum::<Rational>()
            })
            .sum()
    }

    fn visit(&mut self, next: usize, f_sum: &Rational) {
        let n = self.inst.n_facilities();
        let r = self.inst.r;
        if self.chosen.len() >= r {
            self.enumerated += 1;
            let cost = f_sum + self.service();
            let better = match &self.best {
                None => true,
                Some((c, s)) => cost < *c || (cost == *c && self.chosen < *s),
            };
            if better {
                self.best = Some((cost, self.chosen.clone()));
            }
        }
        for k in next..n {
            if self.chosen.len() + (n - k) < r {
                break;
            }
            let f = f_sum + &self.inst.open_cost[k];
            if self.best.as_ref().is_some_and(|(c, _)| f > *c) {
                continue;
            }
            self.chosen.push(k);
            if self.inst.satisfies_constraint(&self.chosen) {
                self.in_set[k] = true;
                self.visit(k + 1, &f);
                self.in_set[k] = false;
            }
            self.chosen.pop();
        }
    }
}

/// Cheapest feasible facility set by enumeration, ties broken towards the
/// lexicographically smallest set.
pub fn exact_solve(inst: &Instance, guard: usize) -> Result<ExactResult> {
    let n = inst.n_facilities();
    if n > guard {
        return Err(Error::Schema(format!("{n} facilities exceed the enumeration guard of {guard}")));
    }
    let by_distance = (0..inst.n_clients())
        .map(|j| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| inst.d(j, a).cmp(inst.d(j, b)).then(a.cmp(&b)));
            order
        })
        .collect();
    let mut search = Search {
        inst,
        by_distance,
        chosen: Vec::new(),
        in_set: vec![false; n],
        best: None,
        enumerated: 0,
    };
    search.visit(0, &Rational::zero());
    let (opt_cost, opt_set) = search.best.ok_or_else(infeasible_instance)?;
    Ok(ExactResult {
        opt_set,
        opt_cost,
        enumerated: search.enumerated,
    })
}

/// Relaxation value below the optimum. Knapsack instances use the
/// strengthened relaxation at the guess given by the exact optimum.
pub fn lp_lower_bound(inst: &Instance, exact: &ExactResult) -> Result<Rational> {
    match &inst.constraint {
        SideConstraint::Matroid(_) => Ok(solve_mlp(inst)?.objective),
        SideConstraint::Knapsack { .. } => {
            let opt_f: Rational = exact.opt_set.iter().map(|&i| &inst.open_cost[i]).sum();
            let deltas = kumar_deltas(inst, &exact.opt_cost);
            let frac = solve_klp(inst, &deltas, &opt_f)?.ok_or_else(|| {
                Error::internal("optimum_guess_feasible", "relaxation at the exact optimum guess is infeasible")
            })?;
            Ok(frac.objective)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_random, ConstraintKind};
    use crate::matroid::Matroid;
    use crate::prep::tests::line;
    use crate::rational::q;

    fn brute(inst: &Instance) -> Option<(Rational, Vec<usize>)> {
        let n = inst.n_facilities();
        let mut best: Option<(Rational, Vec<usize>)> = None;
        for mask in 0u32..(1 << n) {
            let set: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            if set.len() < inst.r || !inst.satisfies_constraint(&set) {
                continue;
            }
            let cost = inst.evaluate(&set).unwrap().total_cost;
            if best.as_ref().is_none_or(|(c, s)| cost < *c || (cost == *c && set < *s)) {
                best = Some((cost, set));
            }
        }
        best
    }

    #[test]
    fn single_facility() {
        let res = exact_solve(&line(&[0], &[4], 1), DEFAULT_GUARD).unwrap();
        assert_eq!(res.opt_set, vec![0]);
        assert_eq!(res.opt_cost, q(4, 1));
    }

    #[test]
    fn cheapest_pair_on_a_line() {
        let mut inst = line(&[0, 4], &[0, 1, 5], 2);
        inst.open_cost = vec![q(0, 1); 3];
        inst.constraint = SideConstraint::Matroid(Matroid::Uniform { k: 2 });
        // {0,1}: 0+1 + 4+3 = 8, {0,2}: 0+5 + 4+1 = 10, {1,2}: 1+5 + 3+1 = 10
        let res = exact_solve(&inst, DEFAULT_GUARD).unwrap();
        assert_eq!(res.opt_set, vec![0, 1]);
        assert_eq!(res.opt_cost, q(8, 1));
    }

    #[test]
    fn over_budget_is_infeasible() {
        let mut inst = line(&[0], &[0, 1], 1);
        inst.constraint = SideConstraint::Knapsack {
            weights: vec![q(3, 1), q(4, 1)],
            budget: q(2, 1),
        };
        assert!(matches!(exact_solve(&inst, DEFAULT_GUARD), Err(Error::Infeasible(_))));
    }

    #[test]
    fn guard_is_enforced() {
        let inst = line(&[0], &[0, 1, 2], 1);
        assert!(matches!(exact_solve(&inst, 2), Err(Error::Schema(_))));
    }

    #[test]
    fn matches_plain_enumeration() {
        for seed in 0..60 {
            let kind = [ConstraintKind::Matroid, ConstraintKind::Knapsack, ConstraintKind::Partition][seed as usize % 3];
            let inst = gen_random(seed, 5, 6, 1 + seed as usize % 3, kind).unwrap();
            let res = exact_solve(&inst, DEFAULT_GUARD).unwrap();
            let (cost, set) = brute(&inst).unwrap();
            assert_eq!((res.opt_cost.clone(), res.opt_set.clone()), (cost, set));
            assert!(lp_lower_bound(&inst, &res).unwrap() <= res.opt_cost);
        }
    }
}
