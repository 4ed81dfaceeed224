//! Instances, metric validation, JSON documents, random generation and
//! solution costing.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matroid::{bits_to_vec, Matroid};
use crate::rational::Rational;

/// Coordinates are turned into distances by rounding the Euclidean norm up
/// to a multiple of `1 / COORD_DENOMINATOR`. Rounding up keeps the triangle
/// inequality, since the ceiling is subadditive.
pub const COORD_DENOMINATOR: i64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Metric {
    n: usize,
    dist: Vec<Rational>,
}

impl Metric {
    /// Validates symmetry, zero diagonal, nonnegativity and the triangle
    /// inequality. `names` label points in error messages.
    pub fn new(rows: Vec<Vec<Rational>>, names: &[String]) -> Result<Self> {
        let n = rows.len();
        if names.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Schema(format!("distance matrix must be {n} x {n}")));
        }
        for p in 0..n {
            if !rows[p][p].is_zero() {
                return Err(Error::Metric(format!("d({0},{0}) = {1} is not zero", names[p], rows[p][p])));
            }
            for q in 0..n {
                if rows[p][q].is_negative() {
                    return Err(Error::Metric(format!("d({},{}) is negative", names[p], names[q])));
                }
                if rows[p][q] != rows[q][p] {
                    return Err(Error::Metric(format!(
                        "asymmetric pair ({}, {}): {} vs {}",
                        names[p], names[q], rows[p][q], rows[q][p]
                    )));
                }
            }
        }
        for p in 0..n {
            for q in p + 1..n {
                for s in 0..n {
                    let via = &rows[p][s] + &rows[s][q];
                    if rows[p][q] > via {
                        return Err(Error::Metric(format!(
                            "triangle inequality fails on ({}, {}, {}): d({},{}) = {} > {}",
                            names[p], names[s], names[q], names[p], names[q], rows[p][q], via
                        )));
                    }
                }
            }
        }
        Ok(Metric {
            n,
            dist: rows.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn d(&self, p: usize, q: usize) -> &Rational {
        &self.dist[p * self.n + q]
    }

    pub fn rows(&self) -> Vec<Vec<Rational>> {
        self.dist.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SideConstraint {
    Matroid(Matroid),
    Knapsack { weights: Vec<Rational>, budget: Rational },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Point {
    pub id: String,
    pub coords: Option<Vec<Rational>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub clients: Vec<Point>,
    pub facilities: Vec<Point>,
    /// Points are indexed clients first, then facilities.
    pub metric: Metric,
    /// Whether the metric came from an explicit matrix rather than coordinates.
    pub explicit_dist: bool,
    pub open_cost: Vec<Rational>,
    pub r: usize,
    pub constraint: SideConstraint,
    pub delta: Rational,
    pub epsilon: Rational,
}

pub fn default_delta() -> Rational {
    Rational::new(1, 10)
}

pub fn default_epsilon() -> Rational {
    Rational::new(1, 20)
}

impl Instance {
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn n_facilities(&self) -> usize {
        self.facilities.len()
    }

    /// Distance between client `j` and facility `i`.
    pub fn d(&self, j: usize, i: usize) -> &Rational {
        self.metric.d(j, self.clients.len() + i)
    }

    /// Distance between clients `j` and `k`.
    pub fn d_clients(&self, j: usize, k: usize) -> &Rational {
        self.metric.d(j, k)
    }

    pub fn matroid(&self) -> Option<&Matroid> {
        match &self.constraint {
            SideConstraint::Matroid(m) => Some(m),
            SideConstraint::Knapsack { .. } => None,
        }
    }

    pub fn is_knapsack(&self) -> bool {
        matches!(self.constraint, SideConstraint::Knapsack { .. })
    }

    pub fn weight(&self, set: &[usize]) -> Rational {
        match &self.constraint {
            SideConstraint::Knapsack { weights, .. } => set.iter().map(|&i| &weights[i]).sum(),
            SideConstraint::Matroid(_) => Rational::zero(),
        }
    }

    /// Whether `set` satisfies the side constraint (independence or budget).
    pub fn satisfies_constraint(&self, set: &[usize]) -> bool {
        match &self.constraint {
            SideConstraint::Matroid(m) => m.is_independent(set),
            SideConstraint::Knapsack { budget, .. } => self.weight(set) <= *budget,
        }
    }

    pub fn gamma(&self) -> Rational {
        Rational::from(3i64) + &self.delta
    }

    /// The `r` members of `set` nearest to client `j`, ties by facility index.
    pub fn nearest_r(&self, j: usize, set: &[usize], r: usize) -> Result<Vec<usize>> {
        if set.len() < r {
            return Err(Error::Infeasible(format!(
                "client {} needs {} open facilities but only {} are open",
                self.clients[j].id,
                r,
                set.len()
            )));
        }
        let mut sorted = set.to_vec();
        sorted.sort_by(|&a, &b| self.d(j, a).cmp(self.d(j, b)).then(a.cmp(&b)));
        sorted.truncate(r);
        Ok(sorted)
    }

    /// Sum of the `r` smallest distances from client `j` to `set`.
    pub fn service_cost_r(&self, j: usize, set: &[usize], r: usize) -> Result<Rational> {
        Ok(self.nearest_r(j, set, r)?.iter().map(|&i| self.d(j, i)).sum())
    }

    /// Opens `set` and assigns every client its `r` nearest open facilities.
    pub fn evaluate(&self, set: &[usize]) -> Result<Solution> {
        let open: Vec<usize> = set.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let facility_cost: Rational = open.iter().map(|&i| &self.open_cost[i]).sum();
        let mut assignment = Vec::with_capacity(self.n_clients());
        let mut service_cost = Rational::zero();
        for j in 0..self.n_clients() {
            let near = self.nearest_r(j, &open, self.r)?;
            for &i in &near {
                service_cost += self.d(j, i);
            }
            assignment.push(near);
        }
        let total_cost = &facility_cost + &service_cost;
        Ok(Solution {
            open,
            assignment,
            facility_cost,
            service_cost,
            total_cost,
        })
    }

    /// Facility cost, service cost and their total for `set`.
    pub fn solution_cost(&self, set: &[usize]) -> Result<(Rational, Rational, Rational)> {
        let s = self.evaluate(set)?;
        Ok((s.facility_cost, s.service_cost, s.total_cost))
    }

    pub fn facility_index(&self, id: &str) -> Option<usize> {
        self.facilities.iter().position(|p| p.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    /// Open facilities, sorted by index.
    pub open: Vec<usize>,
    /// For each client, its `r` nearest open facilities in order.
    pub assignment: Vec<Vec<usize>>,
    pub facility_cost: Rational,
    pub service_cost: Rational,
    pub total_cost: Rational,
}

// ---------------------------------------------------------------------------
// JSON documents

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDoc {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<Rational>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum MatroidDoc {
    Uniform { k: usize },
    Partition { blocks: Vec<Vec<String>>, caps: Vec<usize> },
    Free {},
    Explicit { independent: Vec<Vec<String>> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum ConstraintDoc {
    Matroid(MatroidDoc),
    Knapsack {
        weights: BTreeMap<String, Rational>,
        budget: Rational,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    clients: Vec<PointDoc>,
    facilities: Vec<PointDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist: Option<Vec<Vec<Rational>>>,
    #[serde(default)]
    open_cost: BTreeMap<String, Rational>,
    r: usize,
    constraint: ConstraintDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<Rational>,
}

fn ceil_sqrt(n: &BigInt) -> BigInt {
    let s = n.sqrt();
    if &(&s * &s) == n {
        s
    } else {
        s + 1
    }
}

/// Euclidean distance rounded up to a multiple of `1 / COORD_DENOMINATOR`.
pub fn rounded_euclidean(a: &[Rational], b: &[Rational]) -> Rational {
    let sq: Rational = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            &d * &d
        })
        .sum();
    let scale = BigInt::from(COORD_DENOMINATOR);
    // smallest m with (m / D)^2 >= sq, i.e. m^2 >= ceil(sq * D^2)
    let scaled = Rational::from_bigints(sq.numer() * &scale * &scale, sq.denom()).ceil();
    Rational::from_bigints(ceil_sqrt(&scaled), scale)
}

fn index_map(points: &[PointDoc], kind: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (k, p) in points.iter().enumerate() {
        if map.insert(p.id.clone(), k).is_some() {
            return Err(Error::Schema(format!("duplicate {kind} id {:?}", p.id)));
        }
    }
    Ok(map)
}

fn per_facility(
    values: &BTreeMap<String, Rational>,
    fmap: &HashMap<String, usize>,
    n: usize,
    what: &str,
) -> Result<Vec<Rational>> {
    let mut out = vec![Rational::zero(); n];
    for (id, v) in values {
        let &i = fmap
            .get(id)
            .ok_or_else(|| Error::Schema(format!("{what} names unknown facility {id:?}")))?;
        if v.is_negative() {
            return Err(Error::Schema(format!("{what} of {id:?} is negative")));
        }
        out[i] = v.clone();
    }
    Ok(out)
}

fn facility_list(ids: &[String], fmap: &HashMap<String, usize>, what: &str) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            fmap.get(id)
                .copied()
                .ok_or_else(|| Error::Schema(format!("{what} names unknown facility {id:?}")))
        })
        .collect()
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: InstanceDoc) -> Result<Self> {
        if doc.clients.is_empty() {
            return Err(Error::Schema("instance has no clients".into()));
        }
        if doc.facilities.is_empty() {
            return Err(Error::Schema("instance has no facilities".into()));
        }
        index_map(&doc.clients, "client")?;
        let fmap = index_map(&doc.facilities, "facility")?;
        if let Some(id) = doc.clients.iter().find(|p| fmap.contains_key(&p.id)) {
            return Err(Error::Schema(format!("id {:?} names both a client and a facility", id.id)));
        }
        let nf = doc.facilities.len();
        if doc.r == 0 {
            return Err(Error::Schema("requirement r must be at least 1".into()));
        }
        if doc.r > nf {
            return Err(Error::Schema(format!("requirement r = {} exceeds |F| = {}", doc.r, nf)));
        }
        let points: Vec<&PointDoc> = doc.clients.iter().chain(&doc.facilities).collect();
        let names: Vec<String> = points.iter().map(|p| p.id.clone()).collect();
        let explicit_dist = doc.dist.is_some();
        let rows = match &doc.dist {
            Some(rows) => rows.clone(),
            None => {
                let coords: Vec<&Vec<Rational>> = points
                    .iter()
                    .map(|p| {
                        p.coords.as_ref().ok_or_else(|| {
                            Error::Schema(format!("point {:?} has no coords and no dist matrix was given", p.id))
                        })
                    })
                    .collect::<Result<_>>()?;
                let dim = coords[0].len();
                if let Some(p) = points.iter().zip(&coords).find(|(_, c)| c.len() != dim) {
                    return Err(Error::Schema(format!("point {:?} has coords of the wrong dimension", p.0.id)));
                }
                coords
                    .iter()
                    .map(|a| coords.iter().map(|b| rounded_euclidean(a, b)).collect())
                    .collect()
            }
        };
        let metric = Metric::new(rows, &names)?;
        let open_cost = per_facility(&doc.open_cost, &fmap, nf, "open_cost")?;
        let constraint = match doc.constraint {
            ConstraintDoc::Knapsack { weights, budget } => {
                if budget.is_negative() {
                    return Err(Error::Schema("knapsack budget is negative".into()));
                }
                SideConstraint::Knapsack {
                    weights: per_facility(&weights, &fmap, nf, "weight")?,
                    budget,
                }
            }
            ConstraintDoc::Matroid(m) => SideConstraint::Matroid(match m {
                MatroidDoc::Uniform { k } => {
                    if k > nf {
                        return Err(Error::Schema(format!("uniform matroid rank {k} exceeds |F| = {nf}")));
                    }
                    Matroid::Uniform { k }
                }
                MatroidDoc::Free {} => Matroid::Free,
                MatroidDoc::Partition { blocks, caps } => {
                    let blocks = blocks
                        .iter()
                        .map(|b| facility_list(b, &fmap, "partition block"))
                        .collect::<Result<Vec<_>>>()?;
                    Matroid::partition(&blocks, caps, nf)?
                }
                MatroidDoc::Explicit { independent } => {
                    let family = independent
                        .iter()
                        .map(|s| facility_list(s, &fmap, "independent set"))
                        .collect::<Result<Vec<_>>>()?;
                    Matroid::explicit(&family, nf)?
                }
            }),
        };
        let delta = doc.delta.unwrap_or_else(default_delta);
        let epsilon = doc.epsilon.unwrap_or_else(default_epsilon);
        if !delta.is_positive() || !epsilon.is_positive() {
            return Err(Error::Schema("delta and epsilon must be positive".into()));
        }
        let to_point = |p: PointDoc| Point { id: p.id, coords: p.coords };
        Ok(Instance {
            clients: doc.clients.into_iter().map(to_point).collect(),
            facilities: doc.facilities.into_iter().map(to_point).collect(),
            metric,
            explicit_dist,
            open_cost,
            r: doc.r,
            constraint,
            delta,
            epsilon,
        })
    }

    fn to_doc(&self) -> InstanceDoc {
        let fid = |i: usize| self.facilities[i].id.clone();
        let by_id = |values: &[Rational]| -> BTreeMap<String, Rational> {
            values.iter().enumerate().map(|(i, v)| (fid(i), v.clone())).collect()
        };
        let constraint = match &self.constraint {
            SideConstraint::Knapsack { weights, budget } => ConstraintDoc::Knapsack {
                weights: by_id(weights),
                budget: budget.clone(),
            },
            SideConstraint::Matroid(m) => ConstraintDoc::Matroid(match m {
                Matroid::Uniform { k } => MatroidDoc::Uniform { k: *k },
                Matroid::Free => MatroidDoc::Free {},
                Matroid::Partition { block_of, caps } => {
                    let mut blocks = vec![Vec::new(); caps.len()];
                    for (i, &b) in block_of.iter().enumerate() {
                        blocks[b].push(fid(i));
                    }
                    MatroidDoc::Partition {
                        blocks,
                        caps: caps.clone(),
                    }
                }
                Matroid::Explicit { independent } => MatroidDoc::Explicit {
                    independent: independent
                        .iter()
                        .map(|&m| bits_to_vec(m).into_iter().map(fid).collect())
                        .collect(),
                },
            }),
        };
        let point = |p: &Point| PointDoc {
            id: p.id.clone(),
            coords: p.coords.clone(),
        };
        InstanceDoc {
            clients: self.clients.iter().map(point).collect(),
            facilities: self.facilities.iter().map(point).collect(),
            dist: self.explicit_dist.then(|| self.metric.rows()),
            open_cost: by_id(&self.open_cost),
            r: self.r,
            constraint,
            delta: Some(self.delta.clone()),
            epsilon: Some(self.epsilon.clone()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("instance documents always serialise")
    }
}

// ---------------------------------------------------------------------------
// Random generation

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Uniform or partition, chosen at random.
    Matroid,
    Uniform,
    Partition,
    Knapsack,
}

impl std::str::FromStr for ConstraintKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matroid" => Ok(Self::Matroid),
            "uniform" => Ok(Self::Uniform),
            "partition" => Ok(Self::Partition),
            "knapsack" => Ok(Self::Knapsack),
            _ => Err(Error::Schema(format!("unknown constraint kind {s:?}"))),
        }
    }
}

/// Grid side for generated coordinates.
const GRID: i64 = 10;

/// Deterministic random instance: integer grid points, small integer
/// opening costs and weights, and a side constraint that admits some
/// feasible set of `r` facilities.
pub fn gen_random(seed: u64, n_clients: usize, n_facilities: usize, r: usize, kind: ConstraintKind) -> Result<Instance> {
    if r == 0 || n_facilities < r {
        return Err(Error::Schema(format!(
            "cannot generate r = {r} with {n_facilities} facilities"
        )));
    }
    if n_clients == 0 {
        return Err(Error::Schema("cannot generate an instance without clients".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = |prefix: &str, k: usize| Point {
        id: format!("{prefix}{k}"),
        coords: Some(vec![
            Rational::from_integer(rng.gen_range(0..=GRID)),
            Rational::from_integer(rng.gen_range(0..=GRID)),
        ]),
    };
    let facilities: Vec<Point> = (0..n_facilities).map(|k| point("f", k)).collect();
    let mut clients: Vec<Point> = (0..n_clients).map(|k| point("c", k)).collect();
    // about a third of the clients sit on a facility
    for c in &mut clients {
        if rng.gen_ratio(1, 3) {
            c.coords = facilities[rng.gen_range(0..n_facilities)].coords.clone();
        }
    }
    let open_cost: Vec<Rational> = (0..n_facilities)
        .map(|_| Rational::from_integer(rng.gen_range(0..=4)))
        .collect();
    let kind = match kind {
        ConstraintKind::Matroid if rng.gen_bool(0.5) => ConstraintKind::Uniform,
        ConstraintKind::Matroid => ConstraintKind::Partition,
        other => other,
    };
    let constraint = match kind {
        ConstraintKind::Uniform => SideConstraint::Matroid(Matroid::Uniform {
            k: rng.gen_range(r..=n_facilities),
        }),
        ConstraintKind::Partition => {
            let n_blocks = rng.gen_range(1..=n_facilities.min(3));
            let mut block_of: Vec<usize> = (0..n_facilities)
                .map(|i| if i < n_blocks { i } else { rng.gen_range(0..n_blocks) })
                .collect();
            block_of.shuffle(&mut rng);
            let sizes: Vec<usize> = (0..n_blocks).map(|b| block_of.iter().filter(|&&x| x == b).count()).collect();
            let mut caps: Vec<usize> = sizes.iter().map(|&s| rng.gen_range(0..=s)).collect();
            while caps.iter().sum::<usize>() < r {
                let b = rng.gen_range(0..n_blocks);
                if caps[b] < sizes[b] {
                    caps[b] += 1;
                }
            }
            SideConstraint::Matroid(Matroid::Partition { block_of, caps })
        }
        ConstraintKind::Knapsack => {
            let weights: Vec<i64> = (0..n_facilities).map(|_| rng.gen_range(1..=5)).collect();
            let mut sorted = weights.clone();
            sorted.sort_unstable();
            let lightest: i64 = sorted[..r].iter().sum();
            let total: i64 = sorted.iter().sum();
            let budget = lightest + rng.gen_range(0..=total - lightest);
            SideConstraint::Knapsack {
                weights: weights.into_iter().map(Rational::from_integer).collect(),
                budget: Rational::from_integer(budget),
            }
        }
        ConstraintKind::Matroid => unreachable!(),
    };
    let names: Vec<String> = clients.iter().chain(&facilities).map(|p| p.id.clone()).collect();
    let coords: Vec<&Vec<Rational>> = clients
        .iter()
        .chain(&facilities)
        .map(|p| p.coords.as_ref().expect("generated points have coords"))
        .collect();
    let rows = coords
        .iter()
        .map(|a| coords.iter().map(|b| rounded_euclidean(a, b)).collect())
        .collect();
    let metric = Metric::new(rows, &names)?;
    Ok(Instance {
        clients,
        facilities,
        metric,
        explicit_dist: false,
        open_cost,
        r,
        constraint,
        delta: default_delta(),
        epsilon: default_epsilon(),
    })
}

/// Sum over `set` of `values`, a convenience for weight and cost totals.
pub fn total(values: &[Rational], set: &[usize]) -> Rational {
    set.iter().map(|&i| &values[i]).sum()
}
