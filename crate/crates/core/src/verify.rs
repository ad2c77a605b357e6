//! Exact and statistical checks of the measure identities behind the
//! reduction, run on single models or on a seeded corpus.
//!
//! Exact checks compute both sides of an identity by independent linear
//! algebra and report the largest absolute (or relative) deviation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::classify::{partition_states, Classification, ClassifyError, StateClass};
use crate::corpus::{model_rng, random_ct_policy, random_dt_policy};
use crate::format::ext;
use crate::graph::{can_reach, reachable_from, recurrent_states};
use crate::lift::{evaluate_ct_stationary, evaluate_dt_stationary, lift_policy, LiftError, FEASIBILITY_TOL};
use crate::model::{aggregate_under_policy, safe_mul, CtmdpModel, StationaryPolicy};
use crate::pipeline::{solve, PipelineError};
use crate::plan::SolveStatus;
use crate::reduce::{build_discounted_chain, build_jump_chain, DtmdpModel, ReduceError};
use crate::sim::{estimate_occupancy, run_ex1, simulate_stationary, Ex1Scenario, SimConfig, SimError};

pub const EXACT_TOL: f64 = 1e-9;
pub const OCCUPANCY_TOL: f64 = 1e-10;
/// Certified spectral radius bound for transience.
pub const TRANSIENCE_MARGIN: f64 = 1e-9;
pub const SWEEP_ALPHAS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
pub const SWEEP_TOL: f64 = 1e-3;
pub const GRID_POINTS: usize = 10;
pub const GRID_TOL: f64 = 1e-6;
pub const ROUNDTRIP_POLICIES: usize = 20;
pub const OCCUPANCY_N_MAX: usize = 10;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("singular linear system in {0}")]
    Singular(&'static str),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCase {
    pub label: String,
    pub residual: f64,
    pub tolerance: f64,
    pub outcome: Outcome,
}

impl IdentityCase {
    /// Passes when `residual ≤ tolerance`; a NaN residual fails.
    pub fn new(label: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        let outcome = if residual <= tolerance { Outcome::Pass } else { Outcome::Fail };
        IdentityCase { label: label.into(), residual, tolerance, outcome }
    }

    pub fn judged(label: impl Into<String>, residual: f64, tolerance: f64, pass: bool) -> Self {
        let outcome = if pass { Outcome::Pass } else { Outcome::Fail };
        IdentityCase { label: label.into(), residual, tolerance, outcome }
    }

    pub fn skipped(label: impl Into<String>, reason: impl Into<String>) -> Self {
        IdentityCase { label: label.into(), residual: 0.0, tolerance: 0.0, outcome: Outcome::Skipped(reason.into()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub identity: String,
    pub model: String,
    pub policy: String,
    pub cases: Vec<IdentityCase>,
    pub notes: Vec<String>,
    /// Computed quantities worth keeping, such as the resting mass `Z`.
    pub details: Value,
}

impl IdentityReport {
    fn new(identity: &str, m: &CtmdpModel, policy: &str) -> Self {
        IdentityReport {
            identity: identity.into(),
            model: format!("{} states, {} actions, {} constraints", m.n_states(), m.n_actions(), m.n_constraints()),
            policy: policy.into(),
            cases: Vec::new(),
            notes: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn with_model(mut self, name: impl Into<String>) -> Self {
        self.model = name.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.outcome != Outcome::Fail)
    }

    pub fn skipped(&self) -> bool {
        !self.cases.is_empty() && self.cases.iter().all(|c| matches!(c.outcome, Outcome::Skipped(_)))
    }

    pub fn max_residual(&self) -> f64 {
        self.cases
            .iter()
            .filter(|c| !matches!(c.outcome, Outcome::Skipped(_)))
            .map(|c| c.residual)
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Value {
        let cases: Vec<Value> = self
            .cases
            .iter()
            .map(|c| {
                let (outcome, reason) = match &c.outcome {
                    Outcome::Pass => ("pass", None),
                    Outcome::Fail => ("fail", None),
                    Outcome::Skipped(r) => ("skipped", Some(r.clone())),
                };
                let mut v = json!({
                    "label": c.label,
                    "residual": ext(c.residual),
                    "tolerance": c.tolerance,
                    "outcome": outcome,
                });
                if let Some(r) = reason {
                    v["diagnostic"] = json!(r);
                }
                v
            })
            .collect();
        json!({
            "identity": self.identity,
            "model": self.model,
            "policy": self.policy,
            "passed": self.passed(),
            "max_residual": ext(self.max_residual()),
            "cases": cases,
            "notes": self.notes,
            "details": self.details,
        })
    }
}

fn solve_dense(a: DMatrix<f64>, b: DVector<f64>, what: &'static str) -> Result<DVector<f64>, VerifyError> {
    if b.is_empty() {
        return Ok(b);
    }
    a.lu().solve(&b).ok_or(VerifyError::Singular(what))
}

/// `Σ_a φ(a|y) q̃(x|y,a)`, indexed `[y][x]`.
fn averaged_rates(m: &CtmdpModel, phi: &StationaryPolicy) -> Vec<Vec<f64>> {
    let ns = m.n_states();
    (0..ns)
        .map(|y| {
            (0..ns)
                .map(|x| if x == y { 0.0 } else { (0..m.n_actions()).map(|a| phi.prob(y, a) * m.rate(y, a, x)).sum() })
                .collect()
        })
        .collect()
}

/// `ρ(x) = η_α(x×A)` from `(α + q̄(x))ρ(x) = γ(x) + Σ_y ρ(y) Σ_a φ(a|y) q̃(x|y,a)`.
pub fn discounted_resolvent(m: &CtmdpModel, phi: &StationaryPolicy, alpha: f64) -> Result<Vec<f64>, VerifyError> {
    let ns = m.n_states();
    let agg = aggregate_under_policy(m, phi);
    let flow = averaged_rates(m, phi);
    let a = DMatrix::from_fn(ns, ns, |x, y| if x == y { alpha + agg.total_rate[x] } else { -flow[y][x] });
    let rho = solve_dense(a, DVector::from_column_slice(m.initial()), "discounted resolvent")?;
    Ok(rho.iter().copied().collect())
}

fn balance_residuals(m: &CtmdpModel, eta: &[Vec<f64>], z: &[f64], alpha: f64) -> Vec<f64> {
    let (ns, na) = (m.n_states(), m.n_actions());
    (0..ns)
        .map(|x| {
            let lhs: f64 = (0..na).map(|a| safe_mul(m.total_rate(x, a) + alpha, eta[x][a])).sum::<f64>() + z[x];
            let inflow: f64 = (0..ns)
                .filter(|&y| y != x)
                .flat_map(|y| (0..na).map(move |a| (y, a)))
                .map(|(y, a)| safe_mul(m.rate(y, a, x), eta[y][a]))
                .sum();
            let rhs = m.initial()[x] + inflow;
            if lhs == rhs {
                0.0
            } else {
                (lhs - rhs).abs()
            }
        })
        .collect()
}

/// Discounted balance `Σ_a (q + α) η_α(x,a) = γ(x) + Σ q̃(x|y,a) η_α(y,a)`.
///
/// `η_α` is built from the discounted jump chain, `m = γ (I − P_σ)^{-1}` and
/// `η_α(x,a) = m(x) σ(a|x)/(α + q_x(a))` with `σ ∝ φ (α + q)`, and then
/// compared against the direct resolvent.
pub fn check_discounted_balance(m: &CtmdpModel, phi: &StationaryPolicy, alpha: f64) -> Result<IdentityReport, VerifyError> {
    let (ns, na) = (m.n_states(), m.n_actions());
    let d = build_discounted_chain(m, alpha)?;
    let sigma = weighted_policy(m, phi, alpha);
    let p = policy_kernel(&d, &sigma);
    let a = DMatrix::from_fn(ns, ns, |x, y| if x == y { 1.0 } else { 0.0 } - p[y][x]);
    let visits = solve_dense(a, DVector::from_column_slice(m.initial()), "discounted visits")?;
    let eta: Vec<Vec<f64>> =
        (0..ns).map(|x| (0..na).map(|a| visits[x] * sigma.prob(x, a) / (alpha + m.total_rate(x, a))).collect()).collect();
    let rho = discounted_resolvent(m, phi, alpha)?;

    let mut r = IdentityReport::new("discounted-balance", m, "stationary");
    for (x, res) in balance_residuals(m, &eta, &vec![0.0; ns], alpha).into_iter().enumerate() {
        r.cases.push(IdentityCase::new(format!("alpha={alpha} state={}", m.states()[x]), res, EXACT_TOL));
    }
    let agree = (0..ns).map(|x| (eta[x].iter().sum::<f64>() - rho[x]).abs()).fold(0.0, f64::max);
    r.cases.push(IdentityCase::new(format!("alpha={alpha} resolvent agreement"), agree, EXACT_TOL));
    r.details = json!({ "alpha": alpha, "rho": rho });
    Ok(r)
}

/// `σ(a|x) ∝ φ(a|x)(α + q_x(a))`, falling back to `φ` on rows of zero weight.
fn weighted_policy(m: &CtmdpModel, phi: &StationaryPolicy, alpha: f64) -> StationaryPolicy {
    let rows = (0..m.n_states())
        .map(|x| {
            let w: Vec<f64> = (0..m.n_actions()).map(|a| phi.prob(x, a) * (alpha + m.total_rate(x, a))).collect();
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                w.iter().map(|v| v / total).collect()
            } else {
                phi.row(x).to_vec()
            }
        })
        .collect();
    StationaryPolicy::new(rows).expect("weighted rows are distributions")
}

/// `Σ_a σ(a|x) p(y|x,a)` over `S`, indexed `[x][y]`.
fn policy_kernel(d: &DtmdpModel, sigma: &StationaryPolicy) -> Vec<Vec<f64>> {
    let ns = d.n_states();
    (0..ns)
        .map(|x| {
            let mut row = vec![0.0; ns];
            for a in 0..d.n_actions() {
                let s = sigma.prob(x, a);
                if s > 0.0 {
                    for (y, &p) in d.row(x, a).iter().enumerate() {
                        row[y] += s * p;
                    }
                }
            }
            row
        })
        .collect()
}

/// Bounds the spectral radius of `p` by `‖p^k‖_∞^{1/k}` for `k = 2^j`.
/// Returns the first bound below `1 − TRANSIENCE_MARGIN`.
///
/// Powers are kept rescaled to unit norm with the log of the scale carried
/// separately, so neither overflow nor underflow can fake a certificate.
pub fn certify_transient(p: &DMatrix<f64>) -> Option<f64> {
    let inf_norm = |a: &DMatrix<f64>| a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if p.is_empty() {
        return Some(0.0);
    }
    let mut pk = p.clone();
    let mut log_scale = 0.0;
    let mut k = 1.0f64;
    for _ in 0..64 {
        let norm = inf_norm(&pk);
        if !norm.is_finite() {
            return None;
        }
        if norm == 0.0 {
            return Some(0.0);
        }
        let bound = ((log_scale + norm.ln()) / k).exp();
        if bound < 1.0 - TRANSIENCE_MARGIN {
            return Some(bound);
        }
        pk /= norm;
        log_scale = 2.0 * (log_scale + norm.ln());
        pk = &pk * &pk;
        k *= 2.0;
    }
    None
}

/// Undiscounted balance `Σ_a q η(x,a) + Z(x) = γ(x) + Σ q̃(x|y,a) η(y,a)` with
/// `Z` the probability of coming to rest in `x`.
///
/// The non-resting states reachable from `γ` must be transient under `φ`;
/// otherwise the check is skipped. `α·ρ_α → Z` is confirmed on a sweep of
/// small discount rates.
pub fn check_undiscounted_balance(m: &CtmdpModel, phi: &StationaryPolicy) -> Result<IdentityReport, VerifyError> {
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut r = IdentityReport::new("undiscounted-balance", m, "stationary");
    let agg = aggregate_under_policy(m, phi);
    let succ: Vec<Vec<usize>> = agg.jump.iter().map(|row| (0..ns).filter(|&y| row[y] > 0.0).collect()).collect();
    let mut reached = vec![false; ns];
    for x in (0..ns).filter(|&x| m.initial()[x] > 0.0) {
        for (y, hit) in reachable_from(&succ, x).into_iter().enumerate() {
            reached[y] |= hit;
        }
    }
    let resting: Vec<bool> = agg.total_rate.iter().map(|&q| q == 0.0).collect();
    let transient: Vec<usize> = (0..ns).filter(|&x| reached[x] && !resting[x]).collect();
    let nt = transient.len();
    let pt = DMatrix::from_fn(nt, nt, |i, j| agg.jump[transient[i]][transient[j]]);
    let Some(bound) = certify_transient(&pt) else {
        r.cases.push(IdentityCase::skipped("balance", "non-resting reachable states are not certified transient"));
        return Ok(r);
    };
    r.notes.push(format!("spectral radius bound {bound:.3e} on {nt} transient states"));

    let a = DMatrix::from_fn(nt, nt, |i, j| if i == j { 1.0 } else { 0.0 } - pt[(j, i)]);
    let gamma_t = DVector::from_fn(nt, |i, _| m.initial()[transient[i]]);
    let visits = solve_dense(a, gamma_t, "expected visits")?;
    let mut eta = vec![vec![0.0; na]; ns];
    for (i, &x) in transient.iter().enumerate() {
        for a in 0..na {
            eta[x][a] = visits[i] * phi.prob(x, a) / agg.total_rate[x];
        }
    }
    let mut z = vec![0.0; ns];
    for x in (0..ns).filter(|&x| resting[x] && reached[x]) {
        z[x] = m.initial()[x] + transient.iter().enumerate().map(|(i, &y)| visits[i] * agg.jump[y][x]).sum::<f64>();
        for a in 0..na {
            if phi.prob(x, a) > 0.0 {
                eta[x][a] = f64::INFINITY;
            }
        }
    }
    for (x, res) in balance_residuals(m, &eta, &z, 0.0).into_iter().enumerate() {
        r.cases.push(IdentityCase::new(format!("state={}", m.states()[x]), res, EXACT_TOL));
    }
    let z_total: f64 = z.iter().sum();
    r.cases.push(IdentityCase::new("Z(S) = 1", (z_total - 1.0).abs(), EXACT_TOL));

    let mut errors = Vec::with_capacity(SWEEP_ALPHAS.len());
    for &alpha in &SWEEP_ALPHAS {
        let rho = discounted_resolvent(m, phi, alpha)?;
        errors.push((0..ns).map(|x| (alpha * rho[x] - z[x]).abs()).fold(0.0, f64::max));
    }
    let last = *errors.last().expect("nonempty sweep");
    r.cases.push(IdentityCase::new(format!("alpha-sweep error at {}", SWEEP_ALPHAS[3]), last, SWEEP_TOL));
    let rise = errors.windows(2).map(|w| (w[1] - w[0]).max(0.0)).fold(0.0, f64::max);
    r.cases.push(IdentityCase::new("alpha-sweep monotone trend", rise, EXACT_TOL));
    r.details = json!({
        "Z": m.states().iter().cloned().zip(z.iter().map(|&v| json!(v))).collect::<serde_json::Map<_, _>>(),
        "sweep_alphas": SWEEP_ALPHAS,
        "sweep_errors": errors,
    });
    Ok(r)
}

/// CTMDP occupancy `M^n_α(x,a)` under `φ`, indexed `[n][x][a]`.
pub fn ct_occupancy(m: &CtmdpModel, phi: &StationaryPolicy, n_max: usize, alpha: f64) -> Vec<Vec<Vec<f64>>> {
    let (ns, na) = (m.n_states(), m.n_actions());
    let agg = aggregate_under_policy(m, phi);
    let flow = averaged_rates(m, phi);
    let mut nu = m.initial().to_vec();
    let mut out = Vec::with_capacity(n_max + 1);
    for _ in 0..=n_max {
        let table: Vec<Vec<f64>> = (0..ns)
            .map(|x| {
                let den = alpha + agg.total_rate[x];
                (0..na)
                    .map(|a| if den == 0.0 { 0.0 } else { nu[x] * phi.prob(x, a) * (alpha + m.total_rate(x, a)) / den })
                    .collect()
            })
            .collect();
        out.push(table);
        let mut next = vec![0.0; ns];
        for x in 0..ns {
            let den = alpha + agg.total_rate[x];
            if den > 0.0 && nu[x] > 0.0 {
                for y in 0..ns {
                    next[y] += nu[x] * flow[x][y] / den;
                }
            }
        }
        nu = next;
    }
    out
}

/// Jump-chain marginals `P(X_n = x, A_{n+1} = a)` under `σ`, indexed `[n][x][a]`.
pub fn dt_marginals(d: &DtmdpModel, sigma: &StationaryPolicy, gamma: &[f64], n_max: usize) -> Vec<Vec<Vec<f64>>> {
    let (ns, na) = (d.n_states(), d.n_actions());
    let p = policy_kernel(d, sigma);
    let mut mu = gamma.to_vec();
    let mut out = Vec::with_capacity(n_max + 1);
    for _ in 0..=n_max {
        out.push((0..ns).map(|x| (0..na).map(|a| mu[x] * sigma.prob(x, a)).collect()).collect());
        let mut next = vec![0.0; ns];
        for x in 0..ns {
            for y in 0..ns {
                next[y] += mu[x] * p[x][y];
            }
        }
        mu = next;
    }
    out
}

/// `M^n_α = P(X_n, A_{n+1})` on `(S \ S2) × A` for `n ≤ n_max`.
///
/// Without discounting, states outside `S2` where `φ` has zero total rate are
/// left out of the comparison: the CTMDP occupancy vanishes there while the
/// jump chain still records the visit.
pub fn check_occupancy_equality(
    m: &CtmdpModel,
    phi: &StationaryPolicy,
    n_max: usize,
    alpha: Option<f64>,
) -> Result<IdentityReport, VerifyError> {
    let (ns, na) = (m.n_states(), m.n_actions());
    let cls = Classification::compute(m)?;
    let shift = alpha.unwrap_or(0.0);
    let tag = format!("alpha={shift}");
    let mut r = IdentityReport::new("occupancy-equality", m, "stationary");
    if let Some(x) = (0..ns).find(|&x| !cls.in_zeta(x) && phi.deterministic_action(x) != Some(cls.psi_star[x])) {
        r.cases.push(IdentityCase::skipped(tag, format!("policy leaves psi* at state {}", m.states()[x])));
        return Ok(r);
    }
    let d = match alpha {
        Some(al) => build_discounted_chain(m, al)?,
        None => build_jump_chain(m),
    };
    let sigma = weighted_policy(m, phi, shift);
    let ct = ct_occupancy(m, phi, n_max, shift);
    let dt = dt_marginals(&d, &sigma, m.initial(), n_max);
    let agg = aggregate_under_policy(m, phi);
    let compared: Vec<bool> =
        (0..ns).map(|x| !cls.partition.in_s2(x) && (alpha.is_some() || agg.total_rate[x] > 0.0)).collect();
    let excluded_mass: f64 = (0..=n_max)
        .flat_map(|n| (0..ns).filter(|&x| !cls.partition.in_s2(x) && !compared[x]).map(move |x| (n, x)))
        .map(|(n, x)| dt[n][x].iter().sum::<f64>())
        .sum();
    if excluded_mass > 0.0 {
        r.notes.push(format!("jump-chain mass {excluded_mass:.3e} on resting states outside S2 left out"));
    }
    for n in 0..=n_max {
        let dev = (0..ns)
            .filter(|&x| compared[x])
            .flat_map(|x| (0..na).map(move |a| (x, a)))
            .map(|(x, a)| (ct[n][x][a] - dt[n][x][a]).abs())
            .fold(0.0, f64::max);
        r.cases.push(IdentityCase::new(format!("{tag} n={n}"), dev, OCCUPANCY_TOL));
    }
    Ok(r)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a.is_infinite() || b.is_infinite() {
        f64::INFINITY
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Jump-chain evaluation against the lifted CTMDP evaluation for random
/// jump-chain policies.
pub fn check_roundtrip(m: &CtmdpModel, seed: u64) -> Result<IdentityReport, VerifyError> {
    let cls = Classification::compute(m)?;
    let d = build_jump_chain(m);
    let mut rng = model_rng(seed, 0);
    let mut r = IdentityReport::new("roundtrip", m, "random jump-chain policies");
    for k in 0..ROUNDTRIP_POLICIES {
        let sigma = random_dt_policy(&mut rng, &cls, &d);
        let dt = evaluate_dt_stationary(&d, &sigma, m.initial(), m.bounds());
        let ct = evaluate_ct_stationary(m, &lift_policy(&sigma, m, &cls)?);
        if !(dt.converged && ct.converged) {
            r.notes.push(format!("policy {k}: value iteration hit the sweep cap"));
        }
        let gap = dt
            .values
            .iter()
            .zip(&ct.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(&u, &v)| relative_gap(u, v)))
            .fold(0.0, f64::max);
        r.cases.push(IdentityCase::new(format!("policy {k}"), gap, EXACT_TOL));
    }
    Ok(r)
}

/// Partition, `W` stabilization, `ζ` against the Bellman value and LP
/// consistency on `Ŝ1` and `ζ`.
pub fn check_structure(m: &CtmdpModel) -> Result<IdentityReport, VerifyError> {
    let (ns, na) = (m.n_states(), m.n_actions());
    let cls = Classification::compute(m)?;
    let mut r = IdentityReport::new("structure", m, "none");

    let partition = partition_states(m);
    let mismatches = (0..ns)
        .filter(|&x| {
            let min_q = (0..na).map(|a| m.total_rate(x, a)).fold(f64::INFINITY, f64::min);
            let min_qc = (0..na).map(|a| m.total_rate(x, a) + m.aggregate_cost(x, a)).fold(f64::INFINITY, f64::min);
            let max_q = (0..na).map(|a| m.total_rate(x, a)).fold(0.0, f64::max);
            let memberships = [min_q == 0.0 && min_qc > 0.0, min_qc == 0.0, min_q > 0.0];
            let expected = match partition.class(x) {
                StateClass::S1 | StateClass::S1Hat => 0,
                StateClass::S2 => 1,
                StateClass::S3 => 2,
            };
            let hat_ok = (partition.class(x) == StateClass::S1Hat) == (memberships[0] && max_q == 0.0);
            memberships.iter().filter(|&&b| b).count() != 1 || !memberships[expected] || !hat_ok
        })
        .count();
    r.cases.push(IdentityCase::new("partition is a disjoint cover", mismatches as f64, 0.0));

    r.cases.push(IdentityCase::new(
        "W stabilizes within |S| steps",
        // W_k = W_{k+1} at k = number of distinct levels.
        cls.w.levels.len().saturating_sub(ns) as f64,
        0.0,
    ));
    let v = &cls.value.values;
    let bad_on_w = (0..ns).filter(|&x| cls.w.contains(x) && !(v[x] > 0.0)).count();
    r.cases.push(IdentityCase::new("V > 0 on W", bad_on_w as f64, 0.0));
    let off_w = (0..ns).filter(|&x| !cls.w.contains(x)).map(|x| v[x]).fold(0.0, f64::max);
    r.cases.push(IdentityCase::new("V <= 1e-10 off W", off_w, 1e-10));
    r.cases.push(IdentityCase::new(
        "zeta contained in W",
        (0..ns).filter(|&x| cls.in_zeta(x) && !cls.w.contains(x)).count() as f64,
        0.0,
    ));

    let out = solve(m)?;
    let hat_mass: f64 = (0..ns).filter(|&x| cls.partition.in_s1_hat(x) && cls.in_zeta(x)).map(|x| m.initial()[x]).sum();
    let optimal = out.status() == SolveStatus::Optimal;
    r.cases.push(IdentityCase::judged(
        "initial mass on S1-hat rules out a finite-value solution",
        hat_mass,
        0.0,
        hat_mass == 0.0 || !optimal,
    ));
    if optimal {
        let infinite = out.solution.mu.iter().flatten().filter(|v| !v.is_finite()).count();
        r.cases.push(IdentityCase::new("occupation finite on zeta", infinite as f64, 0.0));
    }
    r.details = json!({ "lp_status": out.status().label(), "w_steps": cls.w.steps });
    Ok(r)
}

/// Exact `J_i(x)` for a jump-chain policy by linear solves.
///
/// States reaching an infinite step cost or a closed class with positive
/// cost are `+∞`; states that cannot reach positive cost are 0; the rest
/// leak out of their class, so the restricted system is nonsingular.
pub fn evaluate_dt_exact(d: &DtmdpModel, sigma: &StationaryPolicy) -> Result<Vec<Vec<f64>>, VerifyError> {
    let (ns, na) = (d.n_states(), d.n_actions());
    let p = policy_kernel(d, sigma);
    let succ: Vec<Vec<usize>> = p.iter().map(|row| (0..ns).filter(|&y| row[y] > 0.0).collect()).collect();
    let leaks: Vec<bool> = (0..ns).map(|x| (0..na).any(|a| sigma.prob(x, a) > 0.0 && d.cemetery_mass(x, a) > 0.0)).collect();
    let recurrent = recurrent_states(&succ, &leaks);
    let mut out = Vec::with_capacity(d.n_costs());
    for i in 0..d.n_costs() {
        let step: Vec<f64> = (0..ns).map(|x| (0..na).map(|a| safe_mul(sigma.prob(x, a), d.reduced_cost(i, x, a))).sum()).collect();
        let seeds: Vec<bool> = (0..ns).map(|x| step[x].is_infinite() || (recurrent[x] && step[x] > 0.0)).collect();
        let infinite = can_reach(&succ, &seeds);
        let costly = can_reach(&succ, &step.iter().map(|&c| c > 0.0).collect::<Vec<_>>());
        let live: Vec<usize> = (0..ns).filter(|&x| costly[x] && !infinite[x]).collect();
        let k = live.len();
        let a = DMatrix::from_fn(k, k, |r, c| if r == c { 1.0 } else { 0.0 } - p[live[r]][live[c]]);
        let b = DVector::from_fn(k, |r, _| step[live[r]]);
        let sol = solve_dense(a, b, "exact evaluation")?;
        let mut j: Vec<f64> = infinite.iter().map(|&inf| if inf { f64::INFINITY } else { 0.0 }).collect();
        for (r, &x) in live.iter().enumerate() {
            j[x] = sol[r];
        }
        out.push(j);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub points: usize,
    pub feasible_points: usize,
    /// Least `Σ γ J_0` over feasible points with finite objective.
    pub best: Option<f64>,
}

/// Exhaustive search over stationary jump-chain policies whose rows put
/// `k/(points − 1)` on the first action, for models with at most two actions.
pub fn grid_search(m: &CtmdpModel, points: usize) -> Result<GridResult, VerifyError> {
    let (ns, na) = (m.n_states(), m.n_actions());
    assert!(na <= 2 && points >= 2, "grid search needs at most two actions");
    let d = build_jump_chain(m);
    let levels = if na == 1 { 1 } else { points };
    let total = levels.pow(ns as u32);
    let (mut feasible_points, mut best) = (0, None::<f64>);
    for code in 0..total {
        let mut c = code;
        let rows: Vec<Vec<f64>> = (0..ns)
            .map(|_| {
                let k = c % levels;
                c /= levels;
                if na == 1 {
                    vec![1.0]
                } else {
                    let p = k as f64 / (points - 1) as f64;
                    vec![p, 1.0 - p]
                }
            })
            .collect();
        let sigma = StationaryPolicy::new(rows).expect("grid rows are distributions");
        let j = evaluate_dt_exact(&d, &sigma)?;
        let value = |i: usize| -> f64 { m.initial().iter().zip(&j[i]).map(|(&g, &v)| safe_mul(g, v)).sum() };
        let objective = value(0);
        let feasible = objective.is_finite()
            && m.bounds().iter().enumerate().all(|(k, &bd)| value(k + 1) <= bd + FEASIBILITY_TOL);
        if feasible {
            feasible_points += 1;
            best = Some(best.map_or(objective, |b| b.min(objective)));
        }
    }
    Ok(GridResult { points: total, feasible_points, best })
}

/// LP optimum against the policy grid, for models with at most 3 states and
/// 2 actions.
pub fn check_lp_grid(m: &CtmdpModel) -> Result<IdentityReport, VerifyError> {
    let mut r = IdentityReport::new("lp-grid-oracle", m, "grid");
    if m.n_states() > 3 || m.n_actions() > 2 {
        r.cases.push(IdentityCase::skipped("grid", "model too large for the grid"));
        return Ok(r);
    }
    let out = solve(m)?;
    let grid = grid_search(m, GRID_POINTS)?;
    let lp_feasible = out.status() == SolveStatus::Optimal;
    r.cases.push(IdentityCase::judged(
        "feasibility verdicts agree",
        0.0,
        0.0,
        lp_feasible == grid.best.is_some(),
    ));
    if let (true, Some(best)) = (lp_feasible, grid.best) {
        r.cases.push(IdentityCase::new("optimum matches grid", (out.value() - best).abs(), GRID_TOL));
    }
    r.details = json!({
        "lp_status": out.status().label(),
        "lp_value": ext(out.value()),
        "grid_best": grid.best.map(ext),
        "grid_points": grid.points,
        "grid_feasible_points": grid.feasible_points,
    });
    Ok(r)
}

/// `M^n(S×A) ≤ 1 + 3·stderr` on a simulated batch.
pub fn check_occupancy_mass_bound(
    m: &CtmdpModel,
    phi: &StationaryPolicy,
    cfg: SimConfig,
    n_max: usize,
) -> Result<IdentityReport, VerifyError> {
    let batch = simulate_stationary(m, phi, cfg)?;
    let mut r = IdentityReport::new("occupancy-mass-bound", m, "stationary");
    for alpha in [None, Some(0.5)] {
        let occ = estimate_occupancy(&batch, n_max, alpha);
        for (n, e) in occ.total.iter().enumerate() {
            let excess = (e.mean - 1.0).max(0.0);
            r.cases.push(IdentityCase::new(
                format!("alpha={} n={n}", alpha.unwrap_or(0.0)),
                excess,
                3.0 * e.stderr,
            ));
        }
    }
    Ok(r)
}

/// The example's reduction gap: the simulated CTMDP cost stays strictly
/// below the jump-chain value 1.
pub fn check_ex1_gap(scenario: Ex1Scenario) -> Result<IdentityReport, VerifyError> {
    let rep = run_ex1(scenario)?;
    let mut r = IdentityReport {
        identity: "ex1-gap".into(),
        model: "example 1".into(),
        policy: "a(t) = t".into(),
        cases: Vec::new(),
        notes: Vec::new(),
        details: rep.to_json(),
    };
    let upper = rep.ctmdp_cost_estimate + 3.0 * rep.ctmdp_cost_stderr;
    r.cases.push(IdentityCase::judged("estimate + 3 stderr < dtmdp value", upper, rep.dtmdp_value, upper < rep.dtmdp_value));
    Ok(r)
}

/// Every exact check on one model, with random policies drawn from `seed`.
pub fn run_suite(m: &CtmdpModel, seed: u64) -> Result<Vec<IdentityReport>, VerifyError> {
    let cls = Classification::compute(m)?;
    let mut rng = model_rng(seed, 1);
    let phi = random_ct_policy(&mut rng, &cls, m.n_actions());
    let mut out = vec![check_structure(m)?, check_roundtrip(m, rng.random())?];
    for alpha in [1.0, 0.1] {
        out.push(check_discounted_balance(m, &phi, alpha)?);
    }
    out.push(check_undiscounted_balance(m, &phi)?);
    for alpha in [None, Some(0.5)] {
        out.push(check_occupancy_equality(m, &phi, OCCUPANCY_N_MAX, alpha)?);
    }
    if m.n_states() <= 3 && m.n_actions() <= 2 {
        out.push(check_lp_grid(m)?);
    }
    Ok(out)
}

/// [`run_suite`] over `models`, naming each report by its corpus index.
pub fn run_corpus(models: &[CtmdpModel], seed: u64) -> Result<Vec<IdentityReport>, VerifyError> {
    let mut out = Vec::new();
    for (k, m) in models.iter().enumerate() {
        for rep in run_suite(m, seed.wrapping_add(k as u64))? {
            out.push(rep.with_model(format!("corpus[{k}]")));
        }
    }
    Ok(out)
}
