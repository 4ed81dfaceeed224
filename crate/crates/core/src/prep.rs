//! The natural relaxation, facility splitting and unit-volume partitions.

use std::collections::BTreeSet;

use serde_json::json;

use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lp::{solve_with_matroid_cuts, CopyCut, LinearProgram, LpError, Relation};
use crate::rational::Rational;

/// An optimal solution of the natural relaxation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fractional {
    /// `x[j][i]`: extent to which client `j` is served by facility `i`.
    pub x: Vec<Vec<Rational>>,
    pub y: Vec<Rational>,
    pub objective: Rational,
}

impl Fractional {
    /// Serves every client from its nearest `r` units of the opening
    /// vector `y`, ties by facility index. This is the optimal assignment
    /// for a fixed `y`, so the result has the nearest-first structure of an
    /// optimal solution.
    pub fn nearest_fill(inst: &Instance, y: Vec<Rational>) -> Result<Fractional> {
        let nf = inst.n_facilities();
        let need = Rational::from(inst.r);
        let mut x = Vec::with_capacity(inst.n_clients());
        for j in 0..inst.n_clients() {
            let mut order: Vec<usize> = (0..nf).collect();
            order.sort_by(|&a, &b| inst.d(j, a).cmp(inst.d(j, b)).then(a.cmp(&b)));
            let mut row = vec![Rational::zero(); nf];
            let mut left = need.clone();
            for i in order {
                if left.is_zero() {
                    break;
                }
                let take = left.clone().min(y[i].clone());
                left -= &take;
                row[i] = take;
            }
            if left.is_positive() {
                return Err(Error::Schema(format!("opening vector holds less than r units for client {j}")));
            }
            x.push(row);
        }
        let objective = (0..nf).map(|i| &inst.open_cost[i] * &y[i]).sum::<Rational>()
            + x.iter()
                .enumerate()
                .flat_map(|(j, row)| row.iter().enumerate().map(move |(i, v)| v * inst.d(j, i)))
                .sum::<Rational>();
        Ok(Fractional { x, y, objective })
    }
}

/// A random feasible fractional point: a lopsided convex combination of two
/// or three feasible open sets, with clients served nearest-first. Reaches
/// points that optimal vertices of small instances rarely produce.
pub fn random_mixture(inst: &Instance, seed: u64) -> Result<Fractional> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    const DENOM: i64 = 50;
    let nf = inst.n_facilities();
    if nf > 16 {
        return Err(Error::Schema("random mixtures enumerate facility subsets; at most 16 facilities".into()));
    }
    let feasible: Vec<Vec<usize>> = (1u32..1 << nf)
        .map(|mask| (0..nf).filter(|&i| mask >> i & 1 == 1).collect::<Vec<_>>())
        .filter(|s| s.len() >= inst.r && inst.satisfies_constraint(s))
        .collect();
    if feasible.is_empty() {
        return Err(infeasible_instance());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(2..=3usize);
    let mut cuts: Vec<i64> = match rng.gen_range(0..3) {
        0 => vec![rng.gen_range(1..=3)],
        1 => vec![DENOM - rng.gen_range(1..=3)],
        _ => (1..k).map(|_| rng.gen_range(1..DENOM)).collect(),
    };
    cuts.sort_unstable();
    cuts.dedup();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(DENOM);
    let mut y = vec![Rational::zero(); nf];
    for w in bounds.windows(2) {
        let weight = Rational::new(w[1] - w[0], DENOM);
        for &i in feasible.choose(&mut rng).expect("nonempty") {
            y[i] += &weight;
        }
    }
    Fractional::nearest_fill(inst, y)
}

/// The natural relaxation without side constraints. Pairs rejected by
/// `allow_x` get no variable; facilities rejected by `allow_y` are fixed
/// closed.
pub struct NaturalLp {
    pub lp: LinearProgram,
    pub y_var: Vec<usize>,
    pub x_var: Vec<Vec<Option<usize>>>,
}

impl NaturalLp {
    pub fn new(inst: &Instance, allow_x: impl Fn(usize, usize) -> bool, allow_y: impl Fn(usize) -> bool) -> Self {
        let mut lp = LinearProgram::new();
        let zero = Rational::zero;
        let y_var: Vec<usize> = (0..inst.n_facilities())
            .map(|i| {
                let upper = if allow_y(i) { Rational::one() } else { zero() };
                lp.add_var(format!("y_{}", inst.facilities[i].id), zero(), Some(upper), inst.open_cost[i].clone())
            })
            .collect();
        let mut x_var = vec![vec![None; inst.n_facilities()]; inst.n_clients()];
        for j in 0..inst.n_clients() {
            let mut row = Vec::new();
            for i in 0..inst.n_facilities() {
                if !allow_x(j, i) {
                    continue;
                }
                let v = lp.add_var(
                    format!("x_{}_{}", inst.facilities[i].id, inst.clients[j].id),
                    zero(),
                    Some(Rational::one()),
                    inst.d(j, i).clone(),
                );
                x_var[j][i] = Some(v);
                row.push((v, Rational::one()));
                lp.add_constraint(
                    format!("link_{}_{}", inst.facilities[i].id, inst.clients[j].id),
                    vec![(v, Rational::one()), (y_var[i], -Rational::one())],
                    Relation::Le,
                    zero(),
                );
            }
            lp.add_constraint(
                format!("demand_{}", inst.clients[j].id),
                row,
                Relation::Eq,
                Rational::from(inst.r),
            );
        }
        NaturalLp { lp, y_var, x_var }
    }

    pub fn extract(&self, values: &[Rational], objective: Rational) -> Fractional {
        Fractional {
            x: self
                .x_var
                .iter()
                .map(|row| row.iter().map(|v| v.map_or_else(Rational::zero, |v| values[v].clone())).collect())
                .collect(),
            y: self.y_var.iter().map(|&v| values[v].clone()).collect(),
            objective,
        }
    }
}

pub(crate) fn infeasible_instance() -> Error {
    Error::Infeasible("no feasible fault-tolerant solution".into())
}

/// Solves the matroid-constrained relaxation to an optimal vertex.
pub fn solve_mlp(inst: &Instance) -> Result<Fractional> {
    let m = inst
        .matroid()
        .ok_or_else(|| Error::Schema("instance has a knapsack constraint, not a matroid".into()))?;
    let nat = NaturalLp::new(inst, |_, _| true, |_| true);
    let copy_vars: Vec<(usize, usize)> = nat.y_var.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut pool: Vec<CopyCut> = Vec::new();
    match solve_with_matroid_cuts(&nat.lp, m, inst.n_facilities(), &copy_vars, &mut pool) {
        Ok((sol, _)) => Ok(nat.extract(&sol.values, sol.objective)),
        Err(LpError::Infeasible) => Err(infeasible_instance()),
        Err(LpError::Unbounded) => Err(Error::internal("relaxation_bounded", "natural relaxation reported unbounded")),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CopyInfo {
    pub origin: usize,
    pub mass: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientStats {
    /// Average distance to each unit-volume partition.
    pub d_av_t: Vec<Rational>,
    /// Largest distance within each unit-volume partition.
    pub d_max_t: Vec<Rational>,
    pub d_av: Rational,
    pub d_max: Rational,
}

/// The fractional solution over facility copies.
///
/// Copies are kept in a global order in which a split inserts the new copy
/// right after its parent. Sorting by distance and then by that order keeps
/// co-located pieces adjacent for every client, so splitting never moves an
/// existing unit-volume boundary.
#[derive(Clone, Debug)]
pub struct SplitState {
    pub r: usize,
    pub copies: Vec<CopyInfo>,
    pub alive: Vec<bool>,
    order: Vec<usize>,
    pos: Vec<usize>,
    /// `dist[j][i]` between client `j` and original facility `i`.
    dist: Vec<Vec<Rational>>,
    /// `F_j`: copies serving client `j`.
    pub serves: Vec<BTreeSet<usize>>,
    /// `F_{j,t}` for `t` in `0..r`.
    pub partitions: Vec<Vec<BTreeSet<usize>>>,
    pub stats: Vec<ClientStats>,
    pub f_total: Rational,
    pub lp_objective: Rational,
}

impl SplitState {
    pub fn n_clients(&self) -> usize {
        self.serves.len()
    }

    pub fn d(&self, j: usize, c: usize) -> &Rational {
        &self.dist[j][self.copies[c].origin]
    }

    pub fn origin(&self, c: usize) -> usize {
        self.copies[c].origin
    }

    pub fn mass(&self, c: usize) -> &Rational {
        &self.copies[c].mass
    }

    pub fn mass_of<'a>(&self, set: impl IntoIterator<Item = &'a usize>) -> Rational {
        set.into_iter().map(|&c| &self.copies[c].mass).sum()
    }

    /// Live copies in global order.
    pub fn live(&self) -> Vec<usize> {
        self.order.iter().copied().filter(|&c| self.alive[c]).collect()
    }

    pub fn position(&self, c: usize) -> usize {
        self.pos[c]
    }

    /// `set` sorted by distance from `j`, ties by global order.
    pub fn sorted_from<'a>(&self, j: usize, set: impl IntoIterator<Item = &'a usize>) -> Vec<usize> {
        let mut v: Vec<usize> = set.into_iter().copied().collect();
        v.sort_by(|&a, &b| self.d(j, a).cmp(self.d(j, b)).then(self.pos[a].cmp(&self.pos[b])));
        v
    }

    /// Largest distance from `j` to a member of `set`.
    pub fn d_max_to<'a>(&self, j: usize, set: impl IntoIterator<Item = &'a usize>) -> Rational {
        set.into_iter()
            .map(|&c| self.d(j, c).clone())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Live copies within closed distance `radius` of client `j`.
    pub fn ball(&self, j: usize, radius: &Rational) -> BTreeSet<usize> {
        (0..self.copies.len())
            .filter(|&c| self.alive[c] && self.d(j, c) <= radius)
            .collect()
    }

    pub fn in_ball(&self, j: usize, radius: &Rational, c: usize) -> bool {
        self.d(j, c) <= radius
    }

    /// Splits copy `c` into a piece of mass `near` that keeps the id and a
    /// new co-located piece holding the rest, placed right after `c`.
    /// Membership in `F_j` and `F_{j,t}` is inherited.
    pub fn split_copy(&mut self, c: usize, near: Rational) -> usize {
        let rest = &self.copies[c].mass - &near;
        assert!(near.is_positive() && rest.is_positive(), "split must leave two positive pieces");
        let new = self.copies.len();
        self.copies.push(CopyInfo {
            origin: self.copies[c].origin,
            mass: rest,
        });
        self.copies[c].mass = near;
        self.alive.push(self.alive[c]);
        let at = self.pos[c] + 1;
        self.order.insert(at, new);
        self.pos.push(0);
        for (p, &k) in self.order.iter().enumerate().skip(at) {
            self.pos[k] = p;
        }
        for j in 0..self.serves.len() {
            if self.serves[j].contains(&c) {
                self.serves[j].insert(new);
            }
            for part in &mut self.partitions[j] {
                if part.contains(&c) {
                    part.insert(new);
                }
            }
        }
        new
    }

    fn compute_stats(&mut self) {
        let r = Rational::from(self.r);
        self.stats = (0..self.n_clients())
            .map(|j| {
                let d_av_t: Vec<Rational> = self.partitions[j]
                    .iter()
                    .map(|p| p.iter().map(|&c| self.mass(c) * self.d(j, c)).sum())
                    .collect();
                let d_max_t: Vec<Rational> = self.partitions[j].iter().map(|p| self.d_max_to(j, p)).collect();
                let d_av = d_av_t.iter().sum::<Rational>() / r.clone();
                let d_max = d_max_t.last().cloned().unwrap_or_else(Rational::zero);
                ClientStats {
                    d_av_t,
                    d_max_t,
                    d_av,
                    d_max,
                }
            })
            .collect();
    }

    /// JSON view of copies, masses and partitions for debugging.
    pub fn debug_json(&self, inst: &Instance) -> serde_json::Value {
        json!({
            "copies": self.order.iter().map(|&c| json!({
                "copy": c,
                "facility": inst.facilities[self.copies[c].origin].id,
                "y": self.copies[c].mass.to_string(),
                "alive": self.alive[c],
            })).collect::<Vec<_>>(),
            "clients": (0..self.n_clients()).map(|j| json!({
                "client": inst.clients[j].id,
                "partitions": self.partitions[j].iter().map(|p| self.sorted_from(j, p)).collect::<Vec<_>>(),
                "d_av_t": self.stats[j].d_av_t.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                "d_max_t": self.stats[j].d_max_t.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Duplicates facilities until every assignment is all-or-nothing, then
/// cuts each client's serving set into `r` unit-volume partitions ordered
/// by distance.
pub fn split_facilities(inst: &Instance, frac: &Fractional, cert: &mut Certificate) -> Result<SplitState> {
    let nc = inst.n_clients();
    let nf = inst.n_facilities();
    let mut copies: Vec<CopyInfo> = (0..nf)
        .map(|i| CopyInfo {
            origin: i,
            mass: frac.y[i].clone(),
        })
        .collect();
    // xc[c][j]: assignment of client j to copy c
    let mut xc: Vec<Vec<Rational>> = (0..nf).map(|i| (0..nc).map(|j| frac.x[j][i].clone()).collect()).collect();
    let mut order: Vec<usize> = (0..nf).collect();
    for j in 0..nc {
        let snapshot = order.clone();
        for c in snapshot {
            let x = xc[c][j].clone();
            if !x.is_positive() || x >= copies[c].mass {
                continue;
            }
            let old = copies[c].mass.clone();
            let rest = &old - &x;
            let new = copies.len();
            let mut row = Vec::with_capacity(nc);
            for k in 0..nc {
                let v = xc[c][k].clone();
                let (keep, give) = if k < j {
                    if v == old {
                        (x.clone(), rest.clone())
                    } else {
                        (Rational::zero(), Rational::zero())
                    }
                } else if k == j {
                    (x.clone(), Rational::zero())
                } else {
                    let keep = v.clone().min(x.clone());
                    let give = &v - &keep;
                    (keep, give)
                };
                xc[c][k] = keep;
                row.push(give);
            }
            xc.push(row);
            copies[c].mass = x;
            copies.push(CopyInfo {
                origin: copies[c].origin,
                mass: rest,
            });
            let at = order.iter().position(|&k| k == c).expect("copy is ordered") + 1;
            order.insert(at, new);
        }
    }
    let n = copies.len();
    for c in 0..n {
        for j in 0..nc {
            let x = &xc[c][j];
            if !(x.is_zero() || *x == copies[c].mass) {
                return Err(Error::internal(
                    "all_or_nothing_assignment",
                    format!("copy {c} serves client {j} with {x} of {}", copies[c].mass),
                ));
            }
        }
    }
    let mut pos = vec![0; n];
    for (p, &c) in order.iter().enumerate() {
        pos[c] = p;
    }
    let serves: Vec<BTreeSet<usize>> = (0..nc)
        .map(|j| (0..n).filter(|&c| xc[c][j].is_positive()).collect())
        .collect();
    let mut state = SplitState {
        r: inst.r,
        copies,
        alive: vec![true; n],
        order,
        pos,
        dist: (0..nc).map(|j| (0..nf).map(|i| inst.d(j, i).clone()).collect()).collect(),
        serves,
        partitions: vec![Vec::new(); nc],
        stats: Vec::new(),
        f_total: Rational::zero(),
        lp_objective: frac.objective.clone(),
    };
    // cut at the integer volume boundaries
    for j in 0..nc {
        let sorted = state.sorted_from(j, &state.serves[j]);
        let mut cum = Rational::zero();
        for c in sorted {
            let after = &cum + state.mass(c);
            let boundary = Rational::from_bigints(cum.floor() + 1, 1.into());
            if boundary < after && boundary > cum {
                let near = &boundary - &cum;
                state.split_copy(c, near);
            }
            cum = after;
        }
    }
    let r = Rational::from(inst.r);
    for j in 0..nc {
        let sorted = state.sorted_from(j, &state.serves[j]);
        let mut parts = vec![BTreeSet::new(); inst.r];
        let mut cum = Rational::zero();
        for c in sorted {
            let t = cum.floor();
            let t: usize = t.try_into().unwrap_or(usize::MAX);
            if t >= inst.r {
                return Err(Error::internal("unit_partitions", format!("client {j} is served by more than r")));
            }
            parts[t].insert(c);
            cum += state.mass(c);
        }
        cert.require("serving_volume", cum == r, || format!("client {j} has serving volume {cum}"))?;
        for (t, p) in parts.iter().enumerate() {
            let m = state.mass_of(p);
            cert.require("unit_partitions", m.is_one(), || format!("client {j} partition {t} has volume {m}"))?;
        }
        state.partitions[j] = parts;
    }
    state.f_total = (0..state.copies.len())
        .map(|c| &inst.open_cost[state.origin(c)] * state.mass(c))
        .sum();
    state.compute_stats();
    check_split(inst, frac, &state, cert)?;
    Ok(state)
}

fn check_split(inst: &Instance, frac: &Fractional, s: &SplitState, cert: &mut Certificate) -> Result<()> {
    let nf = inst.n_facilities();
    let mut mass = vec![Rational::zero(); nf];
    for c in &s.copies {
        mass[c.origin] += &c.mass;
    }
    for i in 0..nf {
        cert.require("mass_conservation", mass[i] == frac.y[i], || {
            format!("facility {i}: copies hold {} but y = {}", mass[i], frac.y[i])
        })?;
    }
    let r = Rational::from(s.r);
    let mut objective = s.f_total.clone();
    for j in 0..s.n_clients() {
        let st = &s.stats[j];
        objective += &r * &st.d_av;
        let mut chain = Vec::with_capacity(2 * s.r);
        for t in 0..s.r {
            chain.push(&st.d_av_t[t]);
            chain.push(&st.d_max_t[t]);
        }
        cert.require("distance_chain", chain.windows(2).all(|w| w[0] <= w[1]), || {
            format!("client {j}: averages and maxima out of order")
        })?;
        for t in 0..s.r {
            if t + 1 < s.r {
                let (a, b) = (&s.partitions[j][t], &s.partitions[j][t + 1]);
                let edge = s.d_max_to(j, a);
                let ok = b.iter().all(|&c| *s.d(j, c) >= edge);
                cert.require("partition_order", ok, || format!("client {j}: partition {t} reaches past {}", t + 1))?;
            }
        }
        let sum: Rational = st.d_av_t.iter().sum();
        cert.require("average_decomposition", sum == &r * &st.d_av, || format!("client {j}"))?;
    }
    cert.require("split_preserves_objective", objective == frac.objective, || {
        format!("split objective {objective} vs relaxation {}", frac.objective)
    })
}
