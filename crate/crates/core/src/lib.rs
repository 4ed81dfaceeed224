//! Constant-factor approximations for fault-tolerant matroid median and
//! fault-tolerant knapsack median, with exact rational arithmetic, an
//! exhaustive oracle and runtime certificates for every structural claim
//! the rounding relies on.

pub mod bundling;
pub mod certificate;
pub mod error;
pub mod filtering;
pub mod flow;
pub mod instance;
pub mod iterative;
pub mod knapsack;
pub mod lp;
pub mod matroid;
pub mod oracle;
pub mod pipeline;
pub mod prep;
pub mod rational;

pub use error::{Error, Result};
pub use rational::{q, Rational};
pub use certificate::Certificate;
pub use instance::{gen_random, ConstraintKind, Instance, SideConstraint, Solution};
pub use knapsack::{drive_knapsack, GuessPair, KnapsackRun, TCase};
pub use matroid::Matroid;
pub use oracle::{exact_solve, lp_lower_bound, ExactResult};
pub use pipeline::{solve_matroid, RoundingRun, RunStats};
