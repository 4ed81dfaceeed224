//! CPLEX-LP text dump, for cross-checking against external solvers.

use std::fmt::Write;

use super::{LinearProgram, Relation};
use crate::rational::Rational;

fn num(v: &Rational) -> String {
    if v.is_integer() {
        v.to_string()
    } else {
        format!("{:.17e}", v.to_f64())
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

fn terms(coeffs: &[(usize, Rational)], lp: &LinearProgram) -> String {
    if coeffs.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (k, (j, a)) in coeffs.iter().enumerate() {
        let sign = if a.is_negative() { "-" } else { "+" };
        if k == 0 && sign == "+" {
            write!(out, "{} {}", num(&a.abs()), sanitize(&lp.vars[*j].name)).unwrap();
        } else {
            write!(out, " {} {} {}", sign, num(&a.abs()), sanitize(&lp.vars[*j].name)).unwrap();
        }
    }
    out
}

/// Renders `lp` in CPLEX-LP format. Non-integral rationals are written as
/// floating-point approximations.
pub fn to_cplex_lp(lp: &LinearProgram) -> String {
    let mut out = String::from("\\ exact rational LP, non-integers rounded\nMinimize\n obj: ");
    let obj: Vec<(usize, Rational)> = lp
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.cost.is_zero())
        .map(|(j, v)| (j, v.cost.clone()))
        .collect();
    out.push_str(&terms(&obj, lp));
    if !lp.objective_offset.is_zero() {
        write!(out, " + {} constant", num(&lp.objective_offset)).unwrap();
    }
    out.push_str("\nSubject To\n");
    for (i, c) in lp.constraints.iter().enumerate() {
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        writeln!(out, " c{}_{}: {} {} {}", i, sanitize(&c.name), terms(&c.coeffs, lp), rel, num(&c.rhs)).unwrap();
    }
    out.push_str("Bounds\n");
    for v in &lp.vars {
        match &v.upper {
            Some(u) => writeln!(out, " {} <= {} <= {}", num(&v.lower), sanitize(&v.name), num(u)).unwrap(),
            None => writeln!(out, " {} >= {}", sanitize(&v.name), num(&v.lower)).unwrap(),
        }
    }
    if !lp.objective_offset.is_zero() {
        out.push_str(" constant = 1\n");
    }
    out.push_str("End\n");
    out
}
