//! Command-line front end for the fault-tolerant median solvers.
//!
//! Exit codes: 0 success, 1 I/O or schema error, 2 infeasible instance,
//! 3 failed runtime invariant.

pub mod report;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ftclust_core::certificate::{knapsack_bound, matroid_bound};
use ftclust_core::knapsack::natural_lower_bound;
use ftclust_core::pipeline::Dumps;
use ftclust_core::{
    drive_knapsack, exact_solve, gen_random, lp_lower_bound, solve_matroid, ConstraintKind, Error, ExactResult, Instance,
    Rational, Result, RunStats,
};

use report::{BoundReference, CertificateDoc, ExactDoc, KnapsackDoc, Mode, RunReport, SolutionDoc, SCHEMA};

#[derive(Debug, Parser)]
#[command(name = "ftclust", version, about = "Fault-tolerant matroid and knapsack median solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an instance and print a certified report.
    Solve(RunArgs),
    /// Solve, then check the result against the exact optimum and the
    /// relaxation bound.
    Compare(CompareArgs),
    /// Write a random instance.
    Gen(GenArgs),
    /// Check that a report's solution is feasible and correctly priced.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Instance JSON file.
    pub instance: PathBuf,
    /// Defaults to the instance's constraint type.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Ball slack; gamma = 3 + delta.
    #[arg(long)]
    pub delta: Option<Rational>,
    /// Guess grid spacing for knapsack instances.
    #[arg(long)]
    pub epsilon: Option<Rational>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for intermediate state: split facilities, bundle and
    /// rounding event logs.
    #[arg(long)]
    pub debug_dumps: Option<PathBuf>,
    /// Include wall-clock timings. Reports are then no longer reproducible.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Largest facility count the exact oracle will enumerate.
    #[arg(long, default_value_t = ftclust_core::oracle::DEFAULT_GUARD)]
    pub oracle_guard: usize,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub clients: usize,
    #[arg(long)]
    pub facilities: usize,
    #[arg(long, default_value_t = 1)]
    pub r: usize,
    /// matroid, uniform, partition or knapsack.
    #[arg(long, default_value = "matroid")]
    pub kind: ConstraintKind,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub instance: PathBuf,
    pub report: PathBuf,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Schema(_) | Error::Metric(_) | Error::Io(_) => 1,
        Error::Infeasible(_) => 2,
        Error::Internal { .. } => 3,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ftclust: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Solve(args) => {
            let (inst, digest) = load(args)?;
            let report = solve(&inst, digest, args)?;
            emit(args.out.as_deref(), &report.to_json())
        }
        Command::Compare(args) => {
            let (inst, digest) = load(&args.run)?;
            let report = compare(&inst, digest, args)?;
            emit(args.run.out.as_deref(), &report.to_json())
        }
        Command::Gen(args) => {
            let inst = gen_random(args.seed, args.clients, args.facilities, args.r, args.kind)?;
            let mut text = inst.to_json();
            text.push('\n');
            emit(args.out.as_deref(), &text)
        }
        Command::Verify(args) => {
            let inst = Instance::from_json(&fs::read_to_string(&args.instance)?)?;
            let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&args.report)?)
                .map_err(|e| Error::Schema(format!("report: {e}")))?;
            let out = verify(&inst, &report)?;
            emit(None, &format!("{}\n", serde_json::to_string_pretty(&out).expect("plain json")))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Reads the instance and applies parameter overrides. The digest covers
/// the file as given, before overrides.
fn load(args: &RunArgs) -> Result<(Instance, String)> {
    let mut inst = Instance::from_json(&fs::read_to_string(&args.instance)?)?;
    let digest = report::digest(&inst);
    if let Some(d) = &args.delta {
        if !d.is_positive() {
            return Err(Error::Schema(format!("delta must be positive, got {d}")));
        }
        inst.delta = d.clone();
    }
    if let Some(e) = &args.epsilon {
        if !e.is_positive() {
            return Err(Error::Schema(format!("epsilon must be positive, got {e}")));
        }
        inst.epsilon = e.clone();
    }
    let actual = if inst.is_knapsack() { Mode::Knapsack } else { Mode::Matroid };
    if let Some(mode) = args.mode {
        if mode != actual {
            return Err(Error::Schema(format!("--mode {mode:?} given for a {actual:?} instance").to_lowercase()));
        }
    }
    Ok((inst, digest))
}

struct Solved {
    report: RunReport,
    /// Relaxation value the certified bound multiplies, for matroid runs.
    rounded_from: Rational,
}

fn solve(inst: &Instance, digest: String, args: &RunArgs) -> Result<RunReport> {
    Ok(solve_inner(inst, digest, args, "solve")?.report)
}

fn solve_inner(inst: &Instance, digest: String, args: &RunArgs, command: &'static str) -> Result<Solved> {
    let mut timings = BTreeMap::new();
    let start = Instant::now();
    let gamma = inst.gamma();
    let (solution, certificate, stats, dumps, lp_bound, rounded_from): (_, _, RunStats, Dumps, _, _) = if inst.is_knapsack() {
        let run = drive_knapsack(inst)?;
        timings.insert("rounding".to_string(), ms(start));
        let t = Instant::now();
        let lp = natural_lower_bound(inst)?;
        timings.insert("lower_bound".to_string(), ms(t));
        let doc = KnapsackDoc {
            guess: run.best.guess.clone(),
            t_case: run.best.t_case.clone(),
            grid_size: run.grid_size,
            distinct_guesses: run.distinct_guesses,
            feasible_guesses: run.feasible_guesses,
        };
        let cert = CertificateDoc::new(
            &run.certificate,
            knapsack_bound(&gamma, &inst.epsilon),
            BoundReference::Optimum,
            Some(doc),
        );
        let rounded_from = run.best.lp_value.clone();
        (run.best.solution, cert, run.best.stats, run.best.dumps, lp, rounded_from)
    } else {
        let run = solve_matroid(inst)?;
        timings.insert("rounding".to_string(), ms(start));
        let cert = CertificateDoc::new(&run.certificate, matroid_bound(&gamma), BoundReference::Relaxation, None);
        (run.solution, cert, run.stats, run.dumps, run.lp_value.clone(), run.lp_value)
    };
    if let Some(dir) = &args.debug_dumps {
        write_dumps(dir, &dumps)?;
    }
    let mut report = RunReport {
        schema: SCHEMA,
        command,
        instance_digest: digest,
        mode: if inst.is_knapsack() { Mode::Knapsack } else { Mode::Matroid },
        delta: inst.delta.clone(),
        epsilon: inst.epsilon.clone(),
        solution: SolutionDoc::new(inst, &solution),
        certificate,
        stats,
        lp_bound,
        exact: None,
        ratio: None,
        timings_ms: None,
    };
    report.set_ratio();
    if args.timings {
        timings.insert("total".to_string(), ms(start));
        report.timings_ms = Some(timings);
    }
    Ok(Solved { report, rounded_from })
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn write_dumps(dir: &Path, dumps: &Dumps) -> Result<()> {
    fs::create_dir_all(dir)?;
    let pretty = serde_json::to_string_pretty(&dumps.split).expect("plain json");
    fs::write(dir.join("split.json"), pretty + "\n")?;
    let lines = |items: Vec<String>| items.into_iter().map(|l| l + "\n").collect::<String>();
    fs::write(
        dir.join("bundles.jsonl"),
        lines(dumps.bundle_events.iter().map(|e| serde_json::to_string(e).expect("plain json")).collect()),
    )?;
    fs::write(
        dir.join("rounding.jsonl"),
        lines(dumps.rounding_events.iter().map(|e| serde_json::to_string(e).expect("plain json")).collect()),
    )?;
    Ok(())
}

fn compare(inst: &Instance, digest: String, args: &CompareArgs) -> Result<RunReport> {
    let solved = solve_inner(inst, digest, &args.run, "compare");
    let exact = exact_solve(inst, args.oracle_guard);
    let (mut solved, exact): (Solved, ExactResult) = match (solved, exact) {
        (Ok(s), Ok(e)) => (s, e),
        (Err(Error::Infeasible(a)), Err(Error::Infeasible(_))) => return Err(Error::Infeasible(a)),
        (Err(Error::Infeasible(a)), Ok(e)) => {
            return Err(Error::internal("solvers_agree", format!("rounding reports infeasible ({a}) but {:?} is feasible", e.opt_set)))
        }
        (Ok(_), Err(Error::Infeasible(b))) => {
            return Err(Error::internal("solvers_agree", format!("rounding found a solution but enumeration reports {b}")))
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let lb = lp_lower_bound(inst, &exact)?;
    let report = &mut solved.report;
    let total = report.solution.total_cost.clone();
    if !(lb <= exact.opt_cost && exact.opt_cost <= total) {
        return Err(Error::internal(
            "sandwich",
            format!("lower bound {lb}, exact {}, rounded {total}", exact.opt_cost),
        ));
    }
    let bound = &report.certificate.bound;
    let base = match report.certificate.bound_reference {
        BoundReference::Relaxation => &solved.rounded_from,
        BoundReference::Optimum => &exact.opt_cost,
    };
    if total > bound * base {
        return Err(Error::internal("certified_ratio", format!("rounded {total} exceeds {bound} times {base}")));
    }
    report.lp_bound = lb;
    report.exact = Some(ExactDoc {
        open: exact.opt_set.iter().map(|&i| inst.facilities[i].id.clone()).collect(),
        cost: exact.opt_cost.clone(),
        enumerated: exact.enumerated,
    });
    report.set_ratio();
    Ok(solved.report)
}

#[derive(Debug, serde::Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub instance_digest: String,
    pub open: Vec<String>,
    pub total_cost: Rational,
}

fn field<'a>(v: &'a serde_json::Value, path: &[&str]) -> Result<&'a serde_json::Value> {
    path.iter()
        .try_fold(v, |v, k| v.get(k))
        .ok_or_else(|| Error::Schema(format!("report lacks {}", path.join("."))))
}

fn id_list(v: &serde_json::Value, what: &str) -> Result<Vec<String>> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Schema(format!("{what}: {e}")))
}

/// Recomputes a report's solution from the instance: feasibility, the
/// assignment to the nearest open facilities and every cost.
pub fn verify(inst: &Instance, report: &serde_json::Value) -> Result<VerifyReport> {
    let schema = field(report, &["schema"])?;
    if schema != SCHEMA {
        return Err(Error::Schema(format!("unsupported report schema {schema}")));
    }
    let digest = report::digest(inst);
    if field(report, &["instance_digest"])? != digest.as_str() {
        return Err(Error::Schema("report was produced for a different instance".into()));
    }
    let ids = id_list(field(report, &["solution", "open"])?, "solution.open")?;
    let open = ids
        .iter()
        .map(|id| inst.facility_index(id).ok_or_else(|| Error::Schema(format!("unknown facility {id:?}"))))
        .collect::<Result<Vec<usize>>>()?;
    if open.len() < inst.r || !inst.satisfies_constraint(&open) {
        return Err(Error::internal("feasible", format!("{ids:?} violates the side constraint or opens fewer than r")));
    }
    let sol = inst.evaluate(&open)?;
    let expected = serde_json::to_value(SolutionDoc::new(inst, &sol)).expect("plain json");
    let given = field(report, &["solution"])?;
    for key in ["open", "assignment", "facility_cost", "service_cost", "total_cost"] {
        let (a, b) = (&expected[key], &given[key]);
        let same = match (a.as_str(), b.as_str()) {
            (Some(x), Some(y)) => x.parse::<Rational>().ok() == y.parse::<Rational>().ok(),
            _ => a == b,
        };
        if !same {
            return Err(Error::internal("solution_matches", format!("{key}: report has {b}, recomputed {a}")));
        }
    }
    Ok(VerifyReport {
        schema: SCHEMA,
        instance_digest: digest,
        open: ids,
        total_cost: sol.total_cost,
    })
}
