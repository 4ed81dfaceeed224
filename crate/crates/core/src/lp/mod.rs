//! Exact rational linear programming to basic (vertex) optimal solutions.

mod cplex;
mod cuts;
mod simplex;

pub use cplex::to_cplex_lp;
pub use cuts::{solve_with_matroid_cuts, CopyCut, CutLoopStats};
pub use simplex::solve_vertex;

use serde::Serialize;

use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub lower: Rational,
    pub upper: Option<Rational>,
    pub cost: Rational,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

impl Constraint {
    pub fn lhs(&self, values: &[Rational]) -> Rational {
        self.coeffs.iter().map(|(j, a)| a * &values[*j]).sum()
    }

    pub fn holds(&self, values: &[Rational]) -> bool {
        let lhs = self.lhs(values);
        match self.relation {
            Relation::Le => lhs <= self.rhs,
            Relation::Eq => lhs == self.rhs,
            Relation::Ge => lhs >= self.rhs,
        }
    }
}

/// A minimisation LP. Every variable needs a finite lower bound.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Constant added to the objective value.
    pub objective_offset: Rational,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: Rational, upper: Option<Rational>, cost: Rational) -> usize {
        assert!(upper.as_ref().is_none_or(|u| *u >= lower), "empty variable range");
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
        });
        self.vars.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, Rational)>,
        relation: Relation,
        rhs: Rational,
    ) -> usize {
        let coeffs = coeffs.into_iter().filter(|(_, a)| !a.is_zero()).collect();
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn objective(&self, values: &[Rational]) -> Rational {
        let body: Rational = self.vars.iter().zip(values).map(|(v, x)| &v.cost * x).sum();
        body + &self.objective_offset
    }

    /// Exact feasibility check, no tolerance.
    pub fn is_feasible(&self, values: &[Rational]) -> bool {
        values.len() == self.vars.len()
            && self
                .vars
                .iter()
                .zip(values)
                .all(|(v, x)| *x >= v.lower && v.upper.as_ref().is_none_or(|u| x <= u))
            && self.constraints.iter().all(|c| c.holds(values))
    }

    /// Indices of constraints that hold with equality at `values`.
    pub fn tight_constraints(&self, values: &[Rational]) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| c.lhs(values) == c.rhs)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rank of the active constraint system (tight rows plus active bounds).
    /// A feasible point is a vertex exactly when this equals the number of
    /// variables.
    pub fn active_rank(&self, values: &[Rational]) -> usize {
        let n = self.vars.len();
        let mut rows: Vec<Vec<Rational>> = Vec::new();
        for i in self.tight_constraints(values) {
            let mut row = vec![Rational::zero(); n];
            for (j, a) in &self.constraints[i].coeffs {
                row[*j] += a;
            }
            rows.push(row);
        }
        for (j, v) in self.vars.iter().enumerate() {
            if values[j] == v.lower || v.upper.as_ref() == Some(&values[j]) {
                let mut row = vec![Rational::zero(); n];
                row[j] = Rational::one();
                rows.push(row);
            }
        }
        matrix_rank(rows, n)
    }

    pub fn is_vertex(&self, values: &[Rational]) -> bool {
        self.is_feasible(values) && self.active_rank(values) == self.vars.len()
    }
}

pub(crate) fn matrix_rank(mut rows: Vec<Vec<Rational>>, n: usize) -> usize {
    let mut rank = 0;
    for col in 0..n {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank][col].clone();
        for r in 0..rows.len() {
            if r != rank && !rows[r][col].is_zero() {
                let f = &rows[r][col] / &pivot;
                for k in col..n {
                    if !rows[rank][k].is_zero() {
                        let delta = &f * &rows[rank][k];
                        rows[r][k] -= delta;
                    }
                }
            }
        }
        rank += 1;
    }
    rank
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexSolution {
    pub values: Vec<Rational>,
    pub objective: Rational,
    /// Basic variables of the final tableau, as indices into the LP's
    /// variables; slack columns are reported as `None`.
    pub basis: Vec<Option<usize>>,
    pub pivots: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
}
