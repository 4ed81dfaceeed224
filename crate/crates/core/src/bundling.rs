//! Bundle and queue construction.
//!
//! Every eligible client proposes the nearest unit volume of its remaining
//! facilities; the client with the closest proposal acts. Representatives
//! absorb intersecting bundles or create new ones. Safe clients freeze when
//! their proposal would straddle a ball it does not share bundles with, or
//! touch a shell bundle.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::certificate::Certificate;
use crate::error::{Error, Result};
use crate::filtering::FilterState;
use crate::prep::SplitState;
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bundle {
    pub members: BTreeSet<usize>,
    pub creator: usize,
    pub shell: bool,
    pub alive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum BundleEvent {
    Create {
        client: usize,
        bundle: usize,
        radius: Rational,
        shell: bool,
    },
    Absorb {
        client: usize,
        bundle: usize,
        radius: Rational,
    },
    FreezeNoAlien {
        client: usize,
        witness: usize,
        witness_queue_len: usize,
        radius: Rational,
        witness_d_max: Rational,
    },
    FreezeNoShell {
        client: usize,
        bundle: usize,
        radius: Rational,
    },
}

#[derive(Clone, Debug)]
pub struct BundleState {
    pub bundles: Vec<Bundle>,
    /// Bundle ids in the order they joined each client's queue.
    pub queues: Vec<Vec<usize>>,
    pub initial_queue_len: Vec<usize>,
    pub frozen: BTreeSet<usize>,
    pub events: Vec<BundleEvent>,
}

impl BundleState {
    pub fn live_bundles(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.bundles.len()).filter(|&b| self.bundles[b].alive)
    }

    /// Union of the first `len` queue entries of `j`.
    pub fn queue_prefix(&self, j: usize, len: usize) -> BTreeSet<usize> {
        self.queues[j]
            .iter()
            .take(len)
            .flat_map(|&b| self.bundles[b].members.iter().copied())
            .collect()
    }

    pub fn events_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
            .collect()
    }
}

struct Proposal {
    client: usize,
    radius: Rational,
    /// Copies of the nearest unit volume; the last may hold more mass than
    /// needed, in which case `take` is its share.
    members: Vec<usize>,
    take: Option<Rational>,
}

fn propose(split: &SplitState, j: usize, remaining: &BTreeSet<usize>) -> Result<Proposal> {
    let one = Rational::one();
    let mut acc = Rational::zero();
    let mut members = Vec::new();
    for c in split.sorted_from(j, remaining) {
        let m = split.mass(c);
        members.push(c);
        if &acc + m >= one {
            let take = (&acc + m > one).then(|| &one - &acc);
            return Ok(Proposal {
                client: j,
                radius: split.d(j, c).clone(),
                members,
                take,
            });
        }
        acc += m;
    }
    Err(Error::internal(
        "remaining_volume",
        format!("client {j} has only {acc} volume left"),
    ))
}

fn intersects(a: &[usize], b: &BTreeSet<usize>) -> bool {
    a.iter().any(|c| b.contains(c))
}

pub fn alg_bundle(split: &mut SplitState, filt: &FilterState, cert: &mut Certificate) -> Result<BundleState> {
    let n = split.n_clients();
    let r = split.r;
    let mut remaining: Vec<BTreeSet<usize>> = split.serves.clone();
    let mut st = BundleState {
        bundles: Vec::new(),
        queues: vec![Vec::new(); n],
        initial_queue_len: vec![0; n],
        frozen: BTreeSet::new(),
        events: Vec::new(),
    };
    let eligible: Vec<usize> = (0..n).filter(|&j| !filt.is_dangerous(j) || filt.is_representative(j)).collect();
    loop {
        let mut best: Option<Proposal> = None;
        for &j in &eligible {
            if st.queues[j].len() >= r || remaining[j].is_empty() {
                continue;
            }
            let p = propose(split, j, &remaining[j])?;
            if best.as_ref().is_none_or(|b| p.radius < b.radius) {
                best = Some(p);
            }
        }
        let Some(p) = best else { break };
        let j = p.client;
        let first_hit = |st: &BundleState, members: &[usize]| {
            (0..st.bundles.len()).find(|&b| intersects(members, &st.bundles[b].members))
        };
        if filt.is_representative(j) {
            if let Some(b) = first_hit(&st, &p.members) {
                absorb(&mut st, &mut remaining, j, b, p.radius);
            } else {
                let shell = st.queues[j].len() + 1 == r;
                create(split, &mut st, &mut remaining, p, shell);
            }
            continue;
        }
        let alien = filt.d_prime.iter().copied().find(|&w| {
            let inside = p.members.iter().filter(|&&c| filt.in_ball(split, w, c)).count();
            inside > 0 && inside < p.members.len() && !intersects(&p.members, &st.queue_prefix(w, r))
        });
        if let Some(w) = alien {
            st.events.push(BundleEvent::FreezeNoAlien {
                client: j,
                witness: w,
                witness_queue_len: st.queues[w].len(),
                radius: p.radius,
                witness_d_max: split.stats[w].d_max.clone(),
            });
            remaining[j].clear();
            st.frozen.insert(j);
            continue;
        }
        let shell_hit = (0..st.bundles.len()).find(|&b| st.bundles[b].shell && intersects(&p.members, &st.bundles[b].members));
        if let Some(b) = shell_hit {
            st.events.push(BundleEvent::FreezeNoShell {
                client: j,
                bundle: b,
                radius: p.radius,
            });
            remaining[j].clear();
            st.frozen.insert(j);
            continue;
        }
        if let Some(b) = first_hit(&st, &p.members) {
            absorb(&mut st, &mut remaining, j, b, p.radius);
        } else {
            create(split, &mut st, &mut remaining, p, false);
        }
    }
    st.initial_queue_len = st.queues.iter().map(Vec::len).collect();
    check_bundles(split, filt, &st, cert)?;
    Ok(st)
}

fn absorb(st: &mut BundleState, remaining: &mut [BTreeSet<usize>], j: usize, b: usize, radius: Rational) {
    st.queues[j].push(b);
    for c in &st.bundles[b].members {
        remaining[j].remove(c);
    }
    st.events.push(BundleEvent::Absorb { client: j, bundle: b, radius });
}

fn create(split: &mut SplitState, st: &mut BundleState, remaining: &mut [BTreeSet<usize>], p: Proposal, shell: bool) {
    let j = p.client;
    if let Some(take) = p.take {
        let c = *p.members.last().expect("proposal is nonempty");
        let new = split.split_copy(c, take);
        for set in remaining.iter_mut() {
            if set.contains(&c) {
                set.insert(new);
            }
        }
        for bundle in &mut st.bundles {
            if bundle.members.contains(&c) {
                bundle.members.insert(new);
            }
        }
    }
    let members: BTreeSet<usize> = p.members.into_iter().collect();
    for c in &members {
        remaining[j].remove(c);
    }
    let id = st.bundles.len();
    st.bundles.push(Bundle {
        members,
        creator: j,
        shell,
        alive: true,
    });
    st.queues[j].push(id);
    st.events.push(BundleEvent::Create {
        client: j,
        bundle: id,
        radius: p.radius,
        shell,
    });
}

/// Geometry of a freeze caused by a ball the proposal straddles: the
/// witness already holds at least `r - 1` bundles and the proposal reaches
/// at least `(1 - 1/gamma) d_max(witness) / 2`.
pub fn check_noalien_geometry(event: &BundleEvent, r: usize, gamma: &Rational, cert: &mut Certificate) -> Result<()> {
    if let BundleEvent::FreezeNoAlien {
        client,
        witness,
        witness_queue_len,
        radius,
        witness_d_max,
    } = event
    {
        cert.require("noalien_witness_queue", *witness_queue_len + 1 >= r, || {
            format!("witness {witness} of client {client} holds {witness_queue_len} bundles")
        })?;
        let floor = (Rational::one() - gamma.recip()) * witness_d_max / Rational::from(2i64);
        cert.require("noalien_geometry", *radius >= floor, || {
            format!("client {client} proposed radius {radius} below {floor}")
        })?;
    }
    Ok(())
}

fn check_bundles(split: &SplitState, filt: &FilterState, st: &BundleState, cert: &mut Certificate) -> Result<()> {
    let r = split.r;
    let mut seen = BTreeSet::new();
    for (b, bundle) in st.bundles.iter().enumerate() {
        let m = split.mass_of(&bundle.members);
        cert.require("bundle_unit_mass", m.is_one(), || format!("bundle {b} has mass {m}"))?;
        for &c in &bundle.members {
            cert.require("bundles_disjoint", seen.insert(c), || format!("copy {c} in two bundles"))?;
        }
    }
    for j in 0..split.n_clients() {
        let q = &st.queues[j];
        let len_ok = if filt.is_representative(j) {
            q.len() == r
        } else if filt.is_dangerous(j) {
            q.is_empty()
        } else {
            q.len() <= r
        };
        cert.require("queue_length", len_ok, || format!("client {j} has {} bundles", q.len()))?;
        let distinct: BTreeSet<_> = q.iter().collect();
        cert.require("queue_distinct", distinct.len() == q.len(), || format!("client {j}"))?;
        for (t, &b) in q.iter().enumerate() {
            let reach = split.d_max_to(j, &st.bundles[b].members);
            let cap = Rational::from(3i64) * &split.stats[j].d_max_t[t];
            cert.require("queue_radius", reach <= cap, || {
                format!("bundle {b} at position {t} of client {j} reaches {reach} > {cap}")
            })?;
        }
    }
    for (b, bundle) in st.bundles.iter().enumerate() {
        let c = bundle.creator;
        let expected = filt.is_representative(c) && st.queues[c].last() == Some(&b) && st.queues[c].len() == r;
        cert.require("shell_bundles", bundle.shell == expected, || format!("bundle {b} created by {c}"))?;
    }
    for &w in &filt.d_prime {
        let ball = filt.ball(split, w);
        let prefix: BTreeSet<usize> = st.queues[w][..r - 1].iter().copied().collect();
        for &b in &prefix {
            cert.require("queue_prefix_in_ball", st.bundles[b].members.is_subset(&ball), || {
                format!("bundle {b} of representative {w} leaves its ball")
            })?;
        }
        for (b, bundle) in st.bundles.iter().enumerate() {
            let inside = bundle.members.is_subset(&ball);
            cert.require("ball_bundles_are_queue_prefix", inside == prefix.contains(&b), || {
                format!("bundle {b} vs ball of {w}")
            })?;
        }
        for j in (0..split.n_clients()).filter(|&j| !filt.is_dangerous(j)) {
            for &b in &st.queues[j] {
                let m = &st.bundles[b].members;
                let ok = m.is_disjoint(&ball) || m.is_subset(&ball);
                cert.require("safe_bundles_respect_balls", ok, || {
                    format!("bundle {b} of safe client {j} straddles the ball of {w}")
                })?;
            }
        }
    }
    for e in &st.events {
        check_noalien_geometry(e, r, &filt.gamma, cert)?;
    }
    cert.note("noalien_geometry");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::filter;
    use crate::prep::tests::line;
    use crate::prep::{solve_mlp, split_facilities};
    use crate::rational::q;

    fn run(inst: &crate::instance::Instance) -> (SplitState, FilterState, BundleState) {
        let mut cert = Certificate::new();
        let frac = solve_mlp(inst).unwrap();
        let mut s = split_facilities(inst, &frac, &mut cert).unwrap();
        let f = filter(inst, &s, &mut cert).unwrap();
        let b = alg_bundle(&mut s, &f, &mut cert).unwrap();
        (s, f, b)
    }

    #[test]
    fn single_safe_client() {
        let inst = line(&[0], &[0, 5], 1);
        let (_, f, b) = run(&inst);
        assert!(f.d_prime.is_empty());
        assert_eq!(b.bundles.len(), 1);
        assert_eq!(b.queues[0], vec![0]);
    }

    #[test]
    fn co_located_safe_clients_share() {
        let inst = line(&[0, 0], &[0], 1);
        let (_, _, b) = run(&inst);
        assert_eq!(b.bundles.len(), 1);
        assert_eq!(b.queues, vec![vec![0], vec![0]]);
        assert!(matches!(b.events[1], BundleEvent::Absorb { client: 1, bundle: 0, .. }));
    }

    #[test]
    fn noalien_geometry_rejects_close_proposal() {
        let mut cert = Certificate::new();
        let e = BundleEvent::FreezeNoAlien {
            client: 0,
            witness: 1,
            witness_queue_len: 1,
            radius: q(1, 1),
            witness_d_max: q(10, 1),
        };
        assert!(check_noalien_geometry(&e, 2, &q(31, 10), &mut cert).is_err());
        let e = BundleEvent::FreezeNoAlien {
            client: 0,
            witness: 1,
            witness_queue_len: 0,
            radius: q(9, 1),
            witness_d_max: q(10, 1),
        };
        assert!(check_noalien_geometry(&e, 2, &q(31, 10), &mut cert).is_err());
        assert!(check_noalien_geometry(&e, 1, &q(31, 10), &mut cert).is_ok());
    }

    #[test]
    fn random_instances_satisfy_bundle_checks() {
        use crate::instance::{gen_random, ConstraintKind};
        for seed in 0..40 {
            let r = 1 + (seed as usize % 3);
            let inst = gen_random(seed, 6, 6, r, ConstraintKind::Uniform).unwrap();
            let (s, f, b) = run(&inst);
            for &w in &f.d_prime {
                assert_eq!(b.queues[w].len(), r);
            }
            let total: Rational = b.bundles.iter().map(|u| s.mass_of(&u.members)).sum();
            assert_eq!(total, Rational::from(b.bundles.len()));
        }
    }
}
