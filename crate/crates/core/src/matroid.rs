//! Matroid rank oracles, independence tests and polytope separation.
//!
//! Facilities are addressed by index. Separation over duplicated facilities
//! aggregates copy masses onto their originals: for a fixed set of originals
//! the violation `z(S') - r(g(S'))` is largest when `S'` takes every copy.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// Largest ground set for which explicit families are checked for the
/// matroid axioms at load time.
pub const EXPLICIT_VALIDATION_LIMIT: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Matroid {
    Uniform { k: usize },
    /// `block_of[i]` is the block containing facility `i`.
    Partition { block_of: Vec<usize>, caps: Vec<usize> },
    Free,
    /// Independent sets as bitmasks over the facility indices.
    Explicit { independent: BTreeSet<u64> },
}

/// A matroid constraint `y(S) <= r(S)` violated by the current point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolatedCut {
    pub subset: Vec<usize>,
    pub rank: usize,
    pub mass: Rational,
}

impl ViolatedCut {
    pub fn violation(&self) -> Rational {
        &self.mass - Rational::from(self.rank)
    }
}

fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0u64, |m, &i| m | (1u64 << i))
}

impl Matroid {
    pub fn partition(blocks: &[Vec<usize>], caps: Vec<usize>, n: usize) -> Result<Self> {
        if blocks.len() != caps.len() {
            return Err(Error::Schema(format!(
                "partition matroid has {} blocks but {} caps",
                blocks.len(),
                caps.len()
            )));
        }
        let mut block_of = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::Schema(format!("partition block {b} is empty")));
            }
            for &i in block {
                if i >= n {
                    return Err(Error::Schema(format!("partition block {b} names facility {i} out of range")));
                }
                if block_of[i] != usize::MAX {
                    return Err(Error::Schema(format!("facility {i} appears in two partition blocks")));
                }
                block_of[i] = b;
            }
        }
        if let Some(i) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::Schema(format!("facility {i} is not covered by any partition block")));
        }
        Ok(Matroid::Partition { block_of, caps })
    }

    /// Builds an explicit matroid from a family of independent sets. The
    /// empty set is always added. Families on at most
    /// [`EXPLICIT_VALIDATION_LIMIT`] elements are checked for downward
    /// closure and the exchange property.
    pub fn explicit(family: &[Vec<usize>], n: usize) -> Result<Self> {
        if n > 63 {
            return Err(Error::Schema("explicit matroids support at most 63 facilities".into()));
        }
        let mut independent = BTreeSet::new();
        independent.insert(0u64);
        for set in family {
            if let Some(&i) = set.iter().find(|&&i| i >= n) {
                return Err(Error::Schema(format!("explicit matroid names facility {i} out of range")));
            }
            independent.insert(mask_of(set));
        }
        if n <= EXPLICIT_VALIDATION_LIMIT {
            for &a in &independent {
                let mut bits = a;
                while bits != 0 {
                    let low = bits & bits.wrapping_neg();
                    if !independent.contains(&(a & !low)) {
                        return Err(Error::Schema(format!(
                            "explicit family is not downward closed at {:?}",
                            bits_to_vec(a)
                        )));
                    }
                    bits &= bits - 1;
                }
            }
            for &a in &independent {
                for &b in &independent {
                    if a.count_ones() < b.count_ones() {
                        let extra = b & !a;
                        let ok = (0..n).any(|i| extra >> i & 1 == 1 && independent.contains(&(a | 1 << i)));
                        if !ok {
                            return Err(Error::Schema(format!(
                                "explicit family violates exchange between {:?} and {:?}",
                                bits_to_vec(a),
                                bits_to_vec(b)
                            )));
                        }
                    }
                }
            }
        }
        Ok(Matroid::Explicit { independent })
    }

    pub fn rank(&self, set: &[usize]) -> usize {
        let distinct: BTreeSet<usize> = set.iter().copied().collect();
        match self {
            Matroid::Uniform { k } => distinct.len().min(*k),
            Matroid::Partition { block_of, caps } => {
                let mut counts = vec![0usize; caps.len()];
                for &i in &distinct {
                    counts[block_of[i]] += 1;
                }
                counts.iter().zip(caps).map(|(&c, &cap)| c.min(cap)).sum()
            }
            Matroid::Free => distinct.len(),
            Matroid::Explicit { independent } => {
                let m = distinct.iter().fold(0u64, |m, &i| m | (1u64 << i));
                independent
                    .iter()
                    .filter(|&&s| s & !m == 0)
                    .map(|s| s.count_ones() as usize)
                    .max()
                    .unwrap_or(0)
            }
        }
    }

    pub fn is_independent(&self, set: &[usize]) -> bool {
        let distinct: BTreeSet<usize> = set.iter().copied().collect();
        distinct.len() == set.len() && self.rank(set) == set.len()
    }

    /// Returns a maximally violated rank constraint for `ybar`, or `None`
    /// when `ybar` lies in the matroid polytope. Among maximal violations
    /// the smallest subset wins, then the lexicographically smallest.
    pub fn separate(&self, ybar: &[Rational]) -> Option<ViolatedCut> {
        let order_desc = |items: &mut Vec<usize>| {
            items.sort_by(|&a, &b| ybar[b].cmp(&ybar[a]).then(a.cmp(&b)));
        };
        // Best prefix of `items` (already ordered) against a cap.
        let best_prefix = |items: &[usize], cap: usize| -> (Rational, usize) {
            let mut best = (Rational::zero(), 0usize);
            let mut acc = Rational::zero();
            for (s, &i) in items.iter().enumerate() {
                acc += &ybar[i];
                let v = &acc - Rational::from((s + 1).min(cap));
                if v > best.0 {
                    best = (v, s + 1);
                }
            }
            best
        };
        let subset: Vec<usize> = match self {
            Matroid::Uniform { k } => {
                let mut items: Vec<usize> = (0..ybar.len()).collect();
                order_desc(&mut items);
                let (_, s) = best_prefix(&items, *k);
                items.truncate(s);
                items
            }
            Matroid::Partition { block_of, caps } => {
                let mut chosen = Vec::new();
                for (b, &cap) in caps.iter().enumerate() {
                    let mut items: Vec<usize> = (0..ybar.len()).filter(|&i| block_of[i] == b).collect();
                    order_desc(&mut items);
                    let (_, s) = best_prefix(&items, cap);
                    chosen.extend_from_slice(&items[..s]);
                }
                chosen
            }
            Matroid::Free => (0..ybar.len()).filter(|&i| ybar[i] > Rational::one()).collect(),
            Matroid::Explicit { .. } => return self.separate_exhaustive(ybar),
        };
        self.cut_if_violated(subset, ybar)
    }

    /// Separation by enumerating every subset. Used for explicit matroids
    /// and as the reference oracle in tests.
    pub fn separate_exhaustive(&self, ybar: &[Rational]) -> Option<ViolatedCut> {
        let n = ybar.len();
        assert!(n < 64, "exhaustive separation over {n} elements");
        let mut best: Option<(Rational, Vec<usize>)> = None;
        for mask in 1u64..(1u64 << n) {
            let set = bits_to_vec(mask);
            let mass: Rational = set.iter().map(|&i| &ybar[i]).sum();
            let v = mass - Rational::from(self.rank(&set));
            if !v.is_positive() {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bv, bs)) => v > *bv || (v == *bv && (set.len(), &set) < (bs.len(), bs)),
            };
            if better {
                best = Some((v, set));
            }
        }
        best.and_then(|(_, set)| self.cut_if_violated(set, ybar))
    }

    fn cut_if_violated(&self, mut subset: Vec<usize>, ybar: &[Rational]) -> Option<ViolatedCut> {
        subset.sort_unstable();
        let mass: Rational = subset.iter().map(|&i| &ybar[i]).sum();
        let rank = self.rank(&subset);
        (mass > Rational::from(rank)).then_some(ViolatedCut { subset, rank, mass })
    }

    /// Separation for the parallel extension over facility copies.
    /// `origin[c]` is the original facility of copy `c`; the returned cut is
    /// over copies and contains every copy of each selected original.
    pub fn separate_copies(&self, n_facilities: usize, origin: &[usize], z: &[Rational]) -> Option<ViolatedCut> {
        let mut ybar = vec![Rational::zero(); n_facilities];
        for (c, &i) in origin.iter().enumerate() {
            ybar[i] += &z[c];
        }
        let cut = self.separate(&ybar)?;
        let chosen: BTreeSet<usize> = cut.subset.iter().copied().collect();
        let subset = (0..origin.len()).filter(|c| chosen.contains(&origin[*c])).collect();
        Some(ViolatedCut {
            subset,
            rank: cut.rank,
            mass: cut.mass,
        })
    }

    /// Rank of a set of copies in the parallel extension.
    pub fn rank_copies(&self, origin: &[usize], copies: &[usize]) -> usize {
        let originals: Vec<usize> = copies
            .iter()
            .map(|&c| origin[c])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        self.rank(&originals)
    }
}

pub(crate) fn bits_to_vec(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;
    use proptest::prelude::*;

    #[test]
    fn rank_examples() {
        assert_eq!(Matroid::Uniform { k: 2 }.rank(&[0, 1, 2, 3, 4]), 2);
        let p = Matroid::partition(&[vec![0, 1], vec![2]], vec![1, 1], 3).unwrap();
        // min(2,1) + min(1,1)
        assert_eq!(p.rank(&[0, 1, 2]), 2);
        for m in [Matroid::Uniform { k: 3 }, p.clone(), Matroid::Free] {
            assert_eq!(m.rank(&[]), 0);
        }
    }

    #[test]
    fn independence_examples() {
        assert!(Matroid::Free.is_independent(&[0, 1, 2, 5]));
        assert!(!Matroid::Uniform { k: 1 }.is_independent(&[0, 1]));
        let p = Matroid::partition(&[vec![0, 1], vec![2]], vec![1, 1], 3).unwrap();
        assert!(p.is_independent(&[0, 2]));
        assert!(!p.is_independent(&[0, 1]));
    }

    #[test]
    fn separation_examples() {
        let cut = Matroid::Uniform { k: 1 }.separate(&[q(7, 10), q(6, 10)]).unwrap();
        assert_eq!(cut.subset, vec![0, 1]);
        assert_eq!(cut.rank, 1);
        assert_eq!(cut.mass, q(13, 10));
        assert_eq!(
            Matroid::Uniform { k: 1 }.separate_exhaustive(&[q(7, 10), q(6, 10)]),
            Some(cut)
        );

        assert!(Matroid::Free.separate(&[q(1, 1), q(1, 2), q(0, 1)]).is_none());
        let p = Matroid::partition(&[vec![0, 1]], vec![1], 2).unwrap();
        assert!(p.separate(&[q(1, 2), q(1, 2)]).is_none());
        assert!(p.separate_exhaustive(&[q(1, 2), q(1, 2)]).is_none());
    }

    #[test]
    fn copy_separation_examples() {
        let m = Matroid::Uniform { k: 1 };
        let cut = m.separate_copies(1, &[0, 0], &[q(6, 10), q(6, 10)]).unwrap();
        assert_eq!(cut.mass, q(12, 10));
        assert_eq!(cut.rank, 1);
        assert_eq!(cut.subset, vec![0, 1]);
        assert!(m.separate_copies(2, &[0, 1, 1], &vec![q(0, 1); 3]).is_none());
        // identity copy map agrees with direct separation
        let y = [q(7, 10), q(6, 10), q(1, 10)];
        let direct = m.separate(&y).unwrap();
        let lifted = m.separate_copies(3, &[0, 1, 2], &y).unwrap();
        assert_eq!(direct, lifted);
    }

    #[test]
    fn explicit_validation() {
        // {a},{b},{a,b} plus empty set: the free matroid on two elements
        let m = Matroid::explicit(&[vec![0], vec![1], vec![0, 1]], 2).unwrap();
        assert_eq!(m.rank(&[0, 1]), 2);
        assert!(Matroid::explicit(&[vec![0, 1]], 2).is_err());
        // {a,b} and {c}: exchange fails for {c} vs {a,b}
        assert!(Matroid::explicit(&[vec![0], vec![1], vec![0, 1], vec![2]], 3).is_err());
    }

    /// Random matroids from random partition structures, truncated; the
    /// independent sets are enumerated into an explicit family.
    fn arb_explicit() -> impl Strategy<Value = (Matroid, usize)> {
        (1usize..=8)
            .prop_flat_map(|n| (Just(n), proptest::collection::vec(0usize..3, n), proptest::collection::vec(0usize..3, 3), 0usize..=8))
            .prop_map(|(n, blocks, caps, trunc)| {
                let part = Matroid::Partition { block_of: blocks, caps };
                let family: Vec<Vec<usize>> = (0u64..(1 << n))
                    .map(bits_to_vec)
                    .filter(|s| part.is_independent(s) && s.len() <= trunc)
                    .collect();
                (Matroid::explicit(&family, n).unwrap(), n)
            })
    }

    proptest! {
        #[test]
        fn rank_axioms(( m, n) in arb_explicit(), a in 0u64..256, b in 0u64..256) {
            let full = (1u64 << n) - 1;
            let (a, b) = (a & full, b & full);
            let (va, vb) = (bits_to_vec(a), bits_to_vec(b));
            let ra = m.rank(&va);
            prop_assert!(ra <= va.len());
            if a & b == a {
                prop_assert!(ra <= m.rank(&vb));
            }
            let union = m.rank(&bits_to_vec(a | b));
            let inter = m.rank(&bits_to_vec(a & b));
            prop_assert!(ra + m.rank(&vb) >= union + inter);
        }

        #[test]
        fn separation_agrees_with_exhaustive(
            kind in 0usize..3,
            k in 0usize..5,
            raw in proptest::collection::vec(0i64..=20, 1..=10),
            blocks in proptest::collection::vec(0usize..3, 10),
        ) {
            let n = raw.len();
            let y: Vec<Rational> = raw.iter().map(|&v| q(v, 10)).collect();
            let m = match kind {
                0 => Matroid::Uniform { k },
                1 => Matroid::Partition { block_of: blocks[..n].to_vec(), caps: vec![k % 3, 1, 2] },
                _ => Matroid::Free,
            };
            let fast = m.separate(&y);
            let slow = m.separate_exhaustive(&y);
            prop_assert_eq!(fast.is_none(), slow.is_none());
            if let (Some(f), Some(s)) = (fast, slow) {
                prop_assert_eq!(f.violation(), s.violation());
            }
        }

        #[test]
        fn copy_rank_matches_original_rank(
            origin in proptest::collection::vec(0usize..5, 1..12),
            pick in proptest::collection::vec(any::<bool>(), 12),
            k in 0usize..4,
        ) {
            let m = Matroid::Uniform { k };
            let copies: Vec<usize> = (0..origin.len()).filter(|&c| pick[c]).collect();
            let originals: Vec<usize> = copies.iter().map(|&c| origin[c]).collect::<BTreeSet<_>>().into_iter().collect();
            prop_assert_eq!(m.rank_copies(&origin, &copies), m.rank(&originals));
        }
    }
}
