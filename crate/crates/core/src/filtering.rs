//! Dangerous clients, conflict filtering and the disjoint ball family.

use std::collections::BTreeSet;

use crate::certificate::Certificate;
use crate::error::Result;
use crate::instance::Instance;
use crate::prep::SplitState;
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterState {
    pub gamma: Rational,
    /// Dangerous clients in ascending id order.
    pub dangerous: Vec<usize>,
    /// Representatives in selection order.
    pub d_prime: Vec<usize>,
    /// Consolidated demand, zero for clients outside the representatives.
    pub demand: Vec<usize>,
    pub marked_by: Vec<Option<usize>>,
    /// Ball radius `d_max / gamma` for representatives.
    pub radius: Vec<Option<Rational>>,
}

impl FilterState {
    pub fn is_representative(&self, j: usize) -> bool {
        self.radius[j].is_some()
    }

    pub fn is_dangerous(&self, j: usize) -> bool {
        self.marked_by[j].is_some()
    }

    pub fn in_ball(&self, split: &SplitState, j: usize, c: usize) -> bool {
        let radius = self.radius[j].as_ref().expect("balls exist only for representatives");
        split.in_ball(j, radius, c)
    }

    /// Live copies of the ball around representative `j`.
    pub fn ball(&self, split: &SplitState, j: usize) -> BTreeSet<usize> {
        split.ball(j, self.radius[j].as_ref().expect("balls exist only for representatives"))
    }
}

/// Clients whose `r`-th partition reaches beyond `3 gamma` times its average.
pub fn find_dangerous(split: &SplitState, gamma: &Rational) -> Vec<usize> {
    let three_gamma = Rational::from(3i64) * gamma;
    (0..split.n_clients())
        .filter(|&j| {
            let st = &split.stats[j];
            st.d_max > &three_gamma * &st.d_av_t[split.r - 1]
        })
        .collect()
}

/// Greedy conflict filtering in nondecreasing order of average distance.
/// Returns the representatives, their demands and the marker of every
/// dangerous client.
pub fn filter_conflicts(
    inst: &Instance,
    split: &SplitState,
    dangerous: &[usize],
) -> (Vec<usize>, Vec<usize>, Vec<Option<usize>>) {
    let mut order = dangerous.to_vec();
    order.sort_by(|&a, &b| split.stats[a].d_av.cmp(&split.stats[b].d_av).then(a.cmp(&b)));
    let six = Rational::from(6i64);
    let mut marked_by = vec![None; split.n_clients()];
    let mut demand = vec![0usize; split.n_clients()];
    let mut d_prime = Vec::new();
    for &j in &order {
        if marked_by[j].is_some() {
            continue;
        }
        d_prime.push(j);
        for &k in &order {
            if marked_by[k].is_some() {
                continue;
            }
            let reach = &six * &split.stats[j].d_av.clone().max(split.stats[k].d_av.clone());
            if k == j || *inst.d_clients(j, k) <= reach {
                marked_by[k] = Some(j);
                demand[j] += 1;
            }
        }
    }
    (d_prime, demand, marked_by)
}

pub fn filter(inst: &Instance, split: &SplitState, cert: &mut Certificate) -> Result<FilterState> {
    let gamma = inst.gamma();
    let dangerous = find_dangerous(split, &gamma);
    let (d_prime, demand, marked_by) = filter_conflicts(inst, split, &dangerous);
    let mut radius = vec![None; split.n_clients()];
    for &j in &d_prime {
        radius[j] = Some(&split.stats[j].d_max / &gamma);
    }
    let state = FilterState {
        gamma,
        dangerous,
        d_prime,
        demand,
        marked_by,
        radius,
    };
    check_filter(inst, split, &state, cert)?;
    Ok(state)
}

fn check_filter(inst: &Instance, split: &SplitState, f: &FilterState, cert: &mut Certificate) -> Result<()> {
    let three_gamma = Rational::from(3i64) * &f.gamma;
    for j in 0..split.n_clients() {
        let st = &split.stats[j];
        let dangerous = st.d_max > &three_gamma * &st.d_av_t[split.r - 1];
        cert.require("dangerous_definition", dangerous == f.is_dangerous(j), || format!("client {j}"))?;
    }
    let total: usize = f.d_prime.iter().map(|&j| f.demand[j]).sum();
    cert.require("demand_accounting", total == f.dangerous.len(), || {
        format!("demands sum to {total} for {} dangerous clients", f.dangerous.len())
    })?;
    let six = Rational::from(6i64);
    for &k in &f.dangerous {
        let j = f.marked_by[k].expect("dangerous clients are marked");
        let (aj, ak) = (&split.stats[j].d_av, &split.stats[k].d_av);
        let ok = f.is_representative(j) && ak >= aj && *inst.d_clients(j, k) <= &six * &aj.clone().max(ak.clone());
        cert.require("conflict_marking", ok, || format!("client {k} marked by {j}"))?;
    }
    let r = Rational::from(split.r);
    let third = Rational::new(1, 3);
    let balls: Vec<BTreeSet<usize>> = f.d_prime.iter().map(|&j| f.ball(split, j)).collect();
    for (a, &j) in f.d_prime.iter().enumerate() {
        let m = split.mass_of(&balls[a]);
        cert.require("ball_mass_window", m >= &r - &third && m < r, || {
            format!("ball of client {j} holds {m}")
        })?;
        for (b, &k) in f.d_prime.iter().enumerate().skip(a + 1) {
            cert.require("balls_disjoint", balls[a].is_disjoint(&balls[b]), || {
                format!("balls of {j} and {k} share a copy")
            })?;
            let (mj, mk) = (&split.stats[j].d_max, &split.stats[k].d_max);
            let need = mj.clone().max(mk.clone()) - mj.clone().min(mk.clone()) / f.gamma.clone();
            cert.require("representative_separation", *inst.d_clients(j, k) >= need, || {
                format!("d({j},{k}) = {} < {need}", inst.d_clients(j, k))
            })?;
        }
    }
    Ok(())
}
