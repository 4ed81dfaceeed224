//! Lazy generation of matroid rank constraints around the vertex solver.

use std::collections::BTreeSet;

use super::{solve_vertex, LinearProgram, LpError, Relation, VertexSolution};
use crate::matroid::Matroid;
use crate::rational::Rational;

/// A rank constraint `z(g^{-1}(S)) <= r(S)` stated over original facilities,
/// so it stays meaningful while copy variables come and go.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CopyCut {
    pub originals: Vec<usize>,
    pub rank: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CutLoopStats {
    pub rounds: usize,
    pub added: usize,
}

/// Solves `lp` with every constraint of the parallel extension of `matroid`
/// enforced lazily. `copy_vars` lists `(variable, original facility)` pairs.
/// Cuts in `pool` are applied up front; newly separated cuts are appended.
///
/// The returned point is a vertex of an outer relaxation of the feasible
/// region and satisfies every matroid constraint, hence it is a vertex of
/// the exact region too.
pub fn solve_with_matroid_cuts(
    lp: &LinearProgram,
    matroid: &Matroid,
    n_facilities: usize,
    copy_vars: &[(usize, usize)],
    pool: &mut Vec<CopyCut>,
) -> Result<(VertexSolution, CutLoopStats), LpError> {
    let origin: Vec<usize> = copy_vars.iter().map(|&(_, i)| i).collect();
    let mut stats = CutLoopStats::default();
    loop {
        let mut working = lp.clone();
        for cut in pool.iter() {
            add_cut_row(&mut working, cut, copy_vars);
        }
        stats.rounds += 1;
        let sol = solve_vertex(&working)?;
        let z: Vec<Rational> = copy_vars.iter().map(|&(v, _)| sol.values[v].clone()).collect();
        let Some(cut) = matroid.separate_copies(n_facilities, &origin, &z) else {
            return Ok((sol, stats));
        };
        let originals: Vec<usize> = cut
            .subset
            .iter()
            .map(|&c| origin[c])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let cut = CopyCut {
            originals,
            rank: cut.rank,
        };
        assert!(!pool.contains(&cut), "separated a cut that is already enforced: {cut:?}");
        assert!(
            stats.added < 1usize << n_facilities.min(30),
            "cut loop exceeded the number of facility subsets"
        );
        pool.push(cut);
        stats.added += 1;
    }
}

pub(crate) fn add_cut_row(lp: &mut LinearProgram, cut: &CopyCut, copy_vars: &[(usize, usize)]) {
    let members: BTreeSet<usize> = cut.originals.iter().copied().collect();
    let coeffs: Vec<(usize, Rational)> = copy_vars
        .iter()
        .filter(|(_, i)| members.contains(i))
        .map(|&(v, _)| (v, Rational::one()))
        .collect();
    if coeffs.is_empty() {
        return;
    }
    let name = format!(
        "rank_{}",
        cut.originals.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("_")
    );
    lp.add_constraint(name, coeffs, Relation::Le, Rational::from(cut.rank));
}
