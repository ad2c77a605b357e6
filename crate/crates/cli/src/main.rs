//! `ctmdp`: command-line front end for constrained total-cost CTMDPs.
//!
//! Every subcommand prints one JSON document to standard output or to
//! `--output`. Exit status is 0 on success, 1 when the model is invalid or
//! the answer is negative (infeasible problem, failed check), 2 on usage
//! errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use ctmdp_core::corpus;
use ctmdp_core::format::{load_model, load_policy, FormatError, PolicyFile};
use ctmdp_core::lift::evaluate_ct_stationary;
use ctmdp_core::model::{validate_model, MarkovTimePolicy};
use ctmdp_core::pipeline::{solve, PipelineError};
use ctmdp_core::plan::SolveStatus;
use ctmdp_core::reduce::{build_discounted_chain, build_jump_chain, ReduceError};
use ctmdp_core::sim::{
    estimate_occupancy, estimate_occupation, run_ex1, simulate, Ex1Scenario, SimConfig, SimError, DEFAULT_K_MAX,
    DEFAULT_T_MAX,
};
use ctmdp_core::verify::{check_ex1_gap, run_corpus, run_suite, VerifyError};
use ctmdp_core::Classification;

#[derive(Debug, Parser)]
#[command(name = "ctmdp", version, about = "Constrained total-cost continuous-time MDPs on finite spaces")]
struct Cli {
    /// Write the JSON result here instead of standard output.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model file and list every violation.
    Validate { model: PathBuf },
    /// State partition, W-sets, ζ and the selectors f*, ψ*.
    Classify { model: PathBuf },
    /// Embedded jump chain, discounted when --alpha is given.
    Reduce {
        model: PathBuf,
        #[arg(long, value_parser = positive_f64)]
        alpha: Option<f64>,
    },
    /// Solve the constrained problem and lift the optimal policy.
    Solve { model: PathBuf },
    /// Exact expected total costs of a stationary policy.
    Evaluate {
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Monte Carlo cost, occupancy and occupation estimates.
    Simulate(SimulateArgs),
    /// Identity checks on one model, or on the seeded corpus when no model is given.
    Verify {
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 100, value_parser = positive_usize)]
        corpus: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// The one-state example whose CTMDP cost beats every jump-chain policy.
    DemoEx1 {
        #[arg(long, default_value_t = 100_000, value_parser = positive_usize)]
        n_traj: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    model: PathBuf,
    /// Policy file; defaults to the lifted optimal policy.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000, value_parser = positive_usize)]
    n_traj: usize,
    #[arg(long, default_value_t = DEFAULT_T_MAX, value_parser = positive_f64)]
    t_max: f64,
    #[arg(long, default_value_t = DEFAULT_K_MAX, value_parser = positive_usize)]
    k_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also report discounted occupancy and occupation estimates.
    #[arg(long, value_parser = positive_f64)]
    alpha: Option<f64>,
    /// Largest jump index in the occupancy table.
    #[arg(long, default_value_t = 10)]
    n_max: usize,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive and finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be positive".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("{0}")]
    Domain(String),
}

/// A JSON result and whether it counts as success.
struct Outcome {
    body: Value,
    ok: bool,
}

impl Outcome {
    fn ok(body: Value) -> Self {
        Outcome { body, ok: true }
    }
}

fn run(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Validate { model } => validate(&model),
        Command::Classify { model } => {
            let m = load_model(&model)?;
            let cls = Classification::compute(&m).map_err(PipelineError::from)?;
            Ok(Outcome::ok(cls.to_json(&m)))
        }
        Command::Reduce { model, alpha } => {
            let m = load_model(&model)?;
            let d = match alpha {
                Some(a) => build_discounted_chain(&m, a)?,
                None => build_jump_chain(&m),
            };
            Ok(Outcome::ok(d.to_json(&m)))
        }
        Command::Solve { model } => {
            let m = load_model(&model)?;
            let out = solve(&m)?;
            Ok(Outcome { ok: out.status() == SolveStatus::Optimal, body: out.to_json(&m) })
        }
        Command::Evaluate { model, policy } => {
            let m = load_model(&model)?;
            let PolicyFile::Stationary(phi) = load_policy(&m, &policy)? else {
                return Err(CliError::Domain("evaluate needs a stationary policy; use simulate for schedules".into()));
            };
            let report = evaluate_ct_stationary(&m, &phi);
            let feasible = report.feasible.iter().all(|&f| f);
            let mut body = report.to_json(m.states());
            body["all_feasible"] = json!(feasible);
            Ok(Outcome::ok(body))
        }
        Command::Simulate(args) => simulate_cmd(args),
        Command::Verify { model, corpus, seed } => {
            let reports = match model {
                Some(path) => run_suite(&load_model(&path)?, seed)?,
                None => {
                    let mut r = run_corpus(&corpus::generate(seed, corpus), seed)?;
                    r.push(check_ex1_gap(Ex1Scenario { seed, n_traj: 100_000 })?);
                    r
                }
            };
            let ok = reports.iter().all(|r| r.passed());
            Ok(Outcome { ok, body: Value::Array(reports.iter().map(|r| r.to_json()).collect()) })
        }
        Command::DemoEx1 { n_traj, seed } => {
            let rep = run_ex1(Ex1Scenario { seed, n_traj })?;
            Ok(Outcome { ok: rep.gap_significant, body: rep.to_json() })
        }
    }
}

fn validate(path: &Path) -> Result<Outcome, CliError> {
    match load_model(path) {
        Ok(m) => {
            let report = validate_model(&m);
            Ok(Outcome::ok(json!({ "valid": report.is_valid(), "violations": Vec::<String>::new() })))
        }
        Err(FormatError::Invalid(report)) => Ok(Outcome {
            ok: false,
            body: json!({
                "valid": false,
                "violations": report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            }),
        }),
        Err(e @ (FormatError::Json { .. } | FormatError::Field { .. })) => {
            Ok(Outcome { ok: false, body: json!({ "valid": false, "error": e.to_string() }) })
        }
        Err(e) => Err(e.into()),
    }
}

fn simulate_cmd(args: SimulateArgs) -> Result<Outcome, CliError> {
    let m = load_model(&args.model)?;
    let policy = match &args.policy {
        Some(path) => match load_policy(&m, path)? {
            PolicyFile::Stationary(p) => MarkovTimePolicy::from(&p),
            PolicyFile::Markov(p) => p,
        },
        None => {
            let out = solve(&m)?;
            let pi = out
                .pi
                .ok_or_else(|| CliError::Domain(format!("no policy given and the model is {}", out.solution.status.label())))?;
            MarkovTimePolicy::from(&pi)
        }
    };
    let cfg = SimConfig { n_traj: args.n_traj, t_max: args.t_max, k_max: args.k_max, seed: args.seed };
    let batch = simulate(&m, &policy, cfg)?;
    let mut body = batch.to_json();
    body["occupancy"] = estimate_occupancy(&batch, args.n_max, None).to_json(&m);
    body["occupation"] = estimate_occupation(&batch, None).to_json(&m);
    if let Some(alpha) = args.alpha {
        body["discounted_occupancy"] = estimate_occupancy(&batch, args.n_max, Some(alpha)).to_json(&m);
        body["discounted_occupation"] = estimate_occupation(&batch, Some(alpha)).to_json(&m);
    }
    Ok(Outcome::ok(body))
}

fn emit(body: &Value, output: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(body).expect("JSON values serialize") + "\n";
    match output {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Write { path: path.display().to_string(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli.command).and_then(|o| emit(&o.body, cli.output.as_deref()).map(|_| o.ok));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
