//! Two-phase bounded-variable primal simplex over exact rationals.
//!
//! Variables are shifted to a zero lower bound; finite upper bounds are
//! handled implicitly (nonbasic columns sit at either bound). Entering and
//! leaving choices follow Bland's rule, so the method terminates and the
//! pivot sequence is a function of the input ordering alone.

use super::{LinearProgram, LpError, Relation, VertexSolution};
use crate::rational::Rational;

struct Tableau {
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    value: Vec<Rational>,
    upper: Vec<Option<Rational>>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    blocked: Vec<bool>,
    reduced: Vec<Rational>,
    pivots: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    fn ncols(&self) -> usize {
        self.value.len()
    }

    fn price(&mut self, cost: &[Rational]) {
        let mut d = cost.to_vec();
        for (r, row) in self.rows.iter().enumerate() {
            let cb = &cost[self.basis[r]];
            if cb.is_zero() {
                continue;
            }
            for (k, a) in row.iter().enumerate() {
                if !a.is_zero() {
                    d[k] -= cb * a;
                }
            }
        }
        self.reduced = d;
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let p = self.rows[r][q].clone();
        if !p.is_one() {
            for a in self.rows[r].iter_mut() {
                if !a.is_zero() {
                    *a = &*a / &p;
                }
            }
        }
        let nz: Vec<usize> = (0..self.ncols()).filter(|&k| !self.rows[r][k].is_zero()).collect();
        let (before, rest) = self.rows.split_at_mut(r);
        let (prow, after) = rest.split_first_mut().expect("pivot row");
        for row in before.iter_mut().chain(after.iter_mut()) {
            let f = row[q].clone();
            if f.is_zero() {
                continue;
            }
            for &k in &nz {
                let delta = &f * &prow[k];
                row[k] -= delta;
            }
        }
        let f = self.reduced[q].clone();
        if !f.is_zero() {
            for &k in &nz {
                let delta = &f * &prow[k];
                self.reduced[k] -= delta;
            }
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.basis[r] = q;
        self.is_basic[q] = true;
        self.at_upper[q] = false;
        self.pivots += 1;
    }

    fn step(&mut self) -> Step {
        let entering = (0..self.ncols()).find(|&j| {
            if self.is_basic[j] || self.blocked[j] {
                return false;
            }
            let d = &self.reduced[j];
            if self.at_upper[j] {
                d.is_positive()
            } else {
                d.is_negative() && !matches!(&self.upper[j], Some(u) if u.is_zero())
            }
        });
        let Some(q) = entering else {
            return Step::Optimal;
        };
        let increasing = !self.at_upper[q];

        // (theta, bland index, row or None for a bound flip, leaves at upper)
        let mut best: Option<(Rational, usize, Option<usize>, bool)> = None;
        let mut offer = |theta: Rational, idx: usize, row: Option<usize>, to_upper: bool| {
            let better = match &best {
                None => true,
                Some((t, i, _, _)) => theta < *t || (theta == *t && idx < *i),
            };
            if better {
                best = Some((theta, idx, row, to_upper));
            }
        };
        if let Some(u) = &self.upper[q] {
            offer(u.clone(), q, None, false);
        }
        for (r, row) in self.rows.iter().enumerate() {
            let alpha = &row[q];
            if alpha.is_zero() {
                continue;
            }
            let rate = if increasing { alpha.clone() } else { -alpha };
            let b = self.basis[r];
            if rate.is_positive() {
                offer(&self.value[b] / &rate, b, Some(r), false);
            } else if let Some(ub) = &self.upper[b] {
                offer((ub - &self.value[b]) / (-&rate), b, Some(r), true);
            }
        }
        let Some((theta, _, row, to_upper)) = best else {
            return Step::Unbounded;
        };

        if !theta.is_zero() {
            let signed = if increasing { theta.clone() } else { -&theta };
            self.value[q] += &signed;
            for r in 0..self.rows.len() {
                let alpha = &self.rows[r][q];
                if !alpha.is_zero() {
                    let delta = alpha * &signed;
                    let b = self.basis[r];
                    self.value[b] -= delta;
                }
            }
        }
        match row {
            None => self.at_upper[q] = !self.at_upper[q],
            Some(r) => {
                let leaving = self.basis[r];
                self.value[leaving] = if to_upper {
                    self.upper[leaving].clone().expect("upper bound")
                } else {
                    Rational::zero()
                };
                self.pivot(r, q);
                self.at_upper[leaving] = to_upper;
            }
        }
        Step::Moved
    }

    fn run(&mut self) -> Result<(), LpError> {
        loop {
            match self.step() {
                Step::Optimal => return Ok(()),
                Step::Unbounded => return Err(LpError::Unbounded),
                Step::Moved => {}
            }
        }
    }
}

/// Solves `lp` to an optimal basic feasible solution.
pub fn solve_vertex(lp: &LinearProgram) -> Result<VertexSolution, LpError> {
    let n = lp.vars.len();
    let m = lp.constraints.len();

    let mut upper: Vec<Option<Rational>> = lp
        .vars
        .iter()
        .map(|v| v.upper.as_ref().map(|u| u - &v.lower))
        .collect();
    let mut blocked = vec![false; n];

    // Column layout: structural | one slack per inequality | artificials.
    let mut slack_of_row = vec![None; m];
    let mut ncols = n;
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.relation != Relation::Eq {
            slack_of_row[i] = Some(ncols);
            ncols += 1;
        }
    }
    let n_before_art = ncols;

    struct RowSpec {
        coeffs: Vec<(usize, Rational)>,
        rhs: Rational,
        basic: Option<usize>,
    }
    let mut specs = Vec::with_capacity(m);
    for (i, c) in lp.constraints.iter().enumerate() {
        let mut coeffs: Vec<(usize, Rational)> = Vec::with_capacity(c.coeffs.len() + 1);
        let mut rhs = c.rhs.clone();
        for (j, a) in &c.coeffs {
            rhs -= a * &lp.vars[*j].lower;
            coeffs.push((*j, a.clone()));
        }
        if let Some(s) = slack_of_row[i] {
            let sign = if c.relation == Relation::Le { 1 } else { -1 };
            coeffs.push((s, Rational::from_integer(sign)));
        }
        if rhs.is_negative() {
            rhs = -rhs;
            for (_, a) in coeffs.iter_mut() {
                *a = -&*a;
            }
        }
        let basic = slack_of_row[i].filter(|s| coeffs.iter().any(|(k, a)| k == s && a.is_one()));
        specs.push(RowSpec { coeffs, rhs, basic });
    }
    let mut n_art = 0;
    for spec in specs.iter_mut() {
        if spec.basic.is_none() {
            let a = n_before_art + n_art;
            n_art += 1;
            spec.coeffs.push((a, Rational::one()));
            spec.basic = Some(a);
        }
    }
    ncols += n_art;
    upper.resize(ncols, None);
    blocked.resize(ncols, false);

    let mut t = Tableau {
        rows: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        value: vec![Rational::zero(); ncols],
        upper,
        at_upper: vec![false; ncols],
        is_basic: vec![false; ncols],
        blocked,
        reduced: Vec::new(),
        pivots: 0,
    };
    for spec in specs {
        let mut row = vec![Rational::zero(); ncols];
        for (k, a) in spec.coeffs {
            row[k] += &a;
        }
        let b = spec.basic.expect("basic column");
        t.value[b] = spec.rhs;
        t.is_basic[b] = true;
        t.basis.push(b);
        t.rows.push(row);
    }

    if n_art > 0 {
        let mut cost = vec![Rational::zero(); ncols];
        for c in cost.iter_mut().skip(n_before_art) {
            *c = Rational::one();
        }
        t.price(&cost);
        t.run().expect("phase one is bounded below by zero");
        let infeas: Rational = (n_before_art..ncols).map(|a| &t.value[a]).sum();
        if infeas.is_positive() {
            return Err(LpError::Infeasible);
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < t.rows.len() {
            if t.basis[r] >= n_before_art {
                let col = (0..n_before_art).find(|&k| !t.is_basic[k] && !t.rows[r][k].is_zero());
                match col {
                    Some(k) => {
                        let art = t.basis[r];
                        t.pivot(r, k);
                        t.value[art] = Rational::zero();
                    }
                    None => {
                        let art = t.basis[r];
                        t.is_basic[art] = false;
                        t.rows.remove(r);
                        t.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        for a in n_before_art..ncols {
            t.blocked[a] = true;
            t.value[a] = Rational::zero();
        }
    }

    let mut cost = vec![Rational::zero(); ncols];
    for (j, v) in lp.vars.iter().enumerate() {
        cost[j] = v.cost.clone();
    }
    t.price(&cost);
    t.run()?;

    let values: Vec<Rational> = lp.vars.iter().enumerate().map(|(j, v)| &v.lower + &t.value[j]).collect();
    assert!(lp.is_feasible(&values), "simplex returned an infeasible point");
    let objective = lp.objective(&values);
    let basis = t.basis.iter().map(|&b| (b < n).then_some(b)).collect();
    Ok(VertexSolution {
        values,
        objective,
        basis,
        pivots: t.pivots,
    })
}
