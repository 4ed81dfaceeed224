//! The JSON report written by `solve` and `compare`.

use std::collections::BTreeMap;

use ftclust_core::{Certificate, GuessPair, Instance, Rational, RunStats, Solution, TCase};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA: &str = "ftclust/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Matroid,
    Knapsack,
}

/// Hex SHA-256 of the canonical instance document.
pub fn digest(inst: &Instance) -> String {
    hex::encode(Sha256::digest(inst.to_json().as_bytes()))
}

#[derive(Clone, Debug, Serialize)]
pub struct ClientAssignment {
    pub client: String,
    pub facilities: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionDoc {
    pub open: Vec<String>,
    pub assignment: Vec<ClientAssignment>,
    pub facility_cost: Rational,
    pub service_cost: Rational,
    pub total_cost: Rational,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<Rational>,
}

impl SolutionDoc {
    pub fn new(inst: &Instance, sol: &Solution) -> Self {
        let fid = |i: &usize| inst.facilities[*i].id.clone();
        SolutionDoc {
            open: sol.open.iter().map(fid).collect(),
            assignment: sol
                .assignment
                .iter()
                .enumerate()
                .map(|(j, fs)| ClientAssignment {
                    client: inst.clients[j].id.clone(),
                    facilities: fs.iter().map(fid).collect(),
                })
                .collect(),
            facility_cost: sol.facility_cost.clone(),
            service_cost: sol.service_cost.clone(),
            total_cost: sol.total_cost.clone(),
            weight: inst.is_knapsack().then(|| inst.weight(&sol.open)),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KnapsackDoc {
    pub guess: GuessPair,
    pub t_case: TCase,
    pub grid_size: usize,
    pub distinct_guesses: usize,
    pub feasible_guesses: usize,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundReference {
    /// The bound multiplies the relaxation value the rounding started from.
    Relaxation,
    /// The bound multiplies the optimum.
    Optimum,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateDoc {
    pub passed: bool,
    pub bound: Rational,
    pub bound_reference: BoundReference,
    /// How many times each invariant was checked.
    pub checks: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knapsack: Option<KnapsackDoc>,
}

impl CertificateDoc {
    pub fn new(cert: &Certificate, bound: Rational, bound_reference: BoundReference, knapsack: Option<KnapsackDoc>) -> Self {
        CertificateDoc {
            passed: true,
            bound,
            bound_reference,
            checks: cert.checks.clone(),
            knapsack,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactDoc {
    pub open: Vec<String>,
    pub cost: Rational,
    pub enumerated: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub instance_digest: String,
    pub mode: Mode,
    pub delta: Rational,
    pub epsilon: Rational,
    pub solution: SolutionDoc,
    pub certificate: CertificateDoc,
    pub stats: RunStats,
    pub lp_bound: Rational,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactDoc>,
    /// Total cost over the larger of the lower bound and the exact optimum.
    pub ratio: Option<Rational>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

impl RunReport {
    pub fn set_ratio(&mut self) {
        let mut denom = self.lp_bound.clone();
        if let Some(e) = &self.exact {
            denom = denom.max(e.cost.clone());
        }
        self.ratio = denom.is_positive().then(|| &self.solution.total_cost / &denom);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialise");
        s.push('\n');
        s
    }
}
