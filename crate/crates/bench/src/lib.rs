//! Fixed instances shared by the benchmarks.

use ftclust_core::{gen_random, ConstraintKind, Instance};

pub fn matroid_fixture(n: usize, r: usize) -> Instance {
    gen_random(17, n, n, r, ConstraintKind::Partition).expect("generator admits these sizes")
}

pub fn knapsack_fixture(n: usize, r: usize) -> Instance {
    gen_random(23, n, n, r, ConstraintKind::Knapsack).expect("generator admits these sizes")
}
