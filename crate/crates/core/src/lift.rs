//! Lifting jump-chain policies back to continuous time, and total-cost
//! evaluation of stationary policies on either side.
//!
//! A stationary jump-chain policy `σ` becomes the CTMDP policy
//! `π(a|x) ∝ σ(a|x)/q_x(a)`. Under `π` the expected cost of one sojourn at
//! `x` is `Σ_a σ(a|x) c_i(x,a)/q_x(a)` and the next state has law
//! `Σ_a σ(a|x) p(·|x,a)`, so the embedded chain reproduces `σ`.

use serde_json::{json, Value};
use thiserror::Error;

use crate::classify::{Classification, DEFAULT_MAX_SWEEPS, DEFAULT_TOL, DIVERGENCE_CAP};
use crate::format::ext;
use crate::graph::{can_reach, recurrent_states};
use crate::model::{aggregate_under_policy, safe_div, safe_mul, CtmdpModel, StationaryPolicy};
use crate::reduce::DtmdpModel;

/// Slack allowed on `Σ γ J_j ≤ d_j`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LiftError {
    #[error("policy puts mass on zero-rate action {action} at state {state}")]
    ZeroRateMass { state: usize, action: usize },
    #[error("policy shape does not match the model")]
    Shape,
}

pub fn lift_policy(sigma: &StationaryPolicy, m: &CtmdpModel, cls: &Classification) -> Result<StationaryPolicy, LiftError> {
    let (ns, na) = (m.n_states(), m.n_actions());
    if sigma.n_states() != ns || sigma.n_actions() != na {
        return Err(LiftError::Shape);
    }
    let mut rows = Vec::with_capacity(ns);
    for x in 0..ns {
        let mut row = vec![0.0; na];
        if let Some(f) = cls.f_star[x] {
            row[f] = 1.0;
        } else if cls.partition.in_s1_hat(x) {
            row[0] = 1.0;
        } else {
            for a in 0..na {
                let s = sigma.prob(x, a);
                if s == 0.0 {
                    continue;
                }
                let q = m.total_rate(x, a);
                if q == 0.0 {
                    return Err(LiftError::ZeroRateMass { state: x, action: a });
                }
                row[a] = s / q;
            }
            let total: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        rows.push(row);
    }
    Ok(StationaryPolicy::new(rows).expect("normalized rows are distributions"))
}

/// Minimal nonnegative solution of `J = c + P J` for one cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainValue {
    pub values: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    pub monotone: bool,
}

/// Monotone value iteration from zero for a substochastic chain.
///
/// `step[x]` may be `+∞`; `leaks[x]` marks rows with mass to the cemetery.
/// States that reach an infinite step cost, or a recurrent class carrying
/// positive cost, are `+∞` outright.
pub fn minimal_solution(step: &[f64], kernel: &[Vec<f64>], leaks: &[bool], tol: f64, max_sweeps: usize) -> ChainValue {
    let n = step.len();
    let succ: Vec<Vec<usize>> = kernel.iter().map(|r| (0..n).filter(|&y| r[y] > 0.0).collect()).collect();
    let recurrent = recurrent_states(&succ, leaks);
    let seeds: Vec<bool> = (0..n).map(|x| step[x].is_infinite() || (recurrent[x] && step[x] > 0.0)).collect();
    let infinite = can_reach(&succ, &seeds);
    let mut v: Vec<f64> = infinite.iter().map(|&i| if i { f64::INFINITY } else { 0.0 }).collect();
    let (mut sweeps, mut converged, mut monotone) = (0, false, true);
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut next = v.clone();
        let (mut change, mut scale): (f64, f64) = (0.0, 1.0);
        for x in (0..n).filter(|&x| !infinite[x]) {
            let mut j = step[x];
            for &y in &succ[x] {
                j += kernel[x][y] * v[y];
            }
            if j > DIVERGENCE_CAP {
                j = f64::INFINITY;
            }
            if j < v[x] {
                monotone = false;
            }
            if j.is_finite() {
                change = change.max((j - v[x]).abs());
                scale = scale.max(j);
            }
            next[x] = j;
        }
        v = next;
        if change <= tol * scale {
            converged = true;
            break;
        }
    }
    ChainValue { values: v, converged, sweeps, monotone }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    /// `J_i(x)`, indexed `[i][x]`.
    pub values: Vec<Vec<f64>>,
    /// `Σ_x γ(x) J_i(x)` per cost index.
    pub from_initial: Vec<f64>,
    /// `Σ γ J_j ≤ d_j` for `j = 1..N`.
    pub feasible: Vec<bool>,
    pub converged: bool,
    pub sweeps: usize,
    pub monotone: bool,
}

impl ValueReport {
    fn assemble(per_cost: Vec<ChainValue>, gamma: &[f64], bounds: &[f64]) -> Self {
        let from_initial: Vec<f64> = per_cost
            .iter()
            .map(|cv| gamma.iter().zip(&cv.values).map(|(&g, &j)| safe_mul(g, j)).sum())
            .collect();
        let mut r = ValueReport {
            converged: per_cost.iter().all(|c| c.converged),
            monotone: per_cost.iter().all(|c| c.monotone),
            sweeps: per_cost.iter().map(|c| c.sweeps).max().unwrap_or(0),
            values: per_cost.into_iter().map(|c| c.values).collect(),
            from_initial,
            feasible: vec![],
        };
        r.feasible = check_feasibility(&r, bounds).per_constraint;
        r
    }

    pub fn to_json(&self, states: &[String]) -> Value {
        let values: Vec<Value> = self
            .values
            .iter()
            .map(|row| {
                Value::Object(states.iter().cloned().zip(row.iter().map(|&v| ext(v))).collect())
            })
            .collect();
        json!({
            "values": values,
            "from_initial": self.from_initial.iter().map(|&v| ext(v)).collect::<Vec<_>>(),
            "feasible": self.feasible,
            "converged": self.converged,
            "sweeps": self.sweeps,
        })
    }
}

/// Expected total reduced cost under a stationary jump-chain policy.
pub fn evaluate_dt_stationary(d: &DtmdpModel, sigma: &StationaryPolicy, gamma: &[f64], bounds: &[f64]) -> ValueReport {
    let (ns, na) = (d.n_states(), d.n_actions());
    let mut kernel = vec![vec![0.0; ns]; ns];
    let mut leaks = vec![false; ns];
    for x in 0..ns {
        for a in 0..na {
            let s = sigma.prob(x, a);
            if s == 0.0 {
                continue;
            }
            for (y, &p) in d.row(x, a).iter().enumerate() {
                kernel[x][y] += s * p;
            }
            leaks[x] |= d.cemetery_mass(x, a) > 0.0;
        }
    }
    let per_cost = (0..d.n_costs())
        .map(|i| {
            let step: Vec<f64> = (0..ns)
                .map(|x| (0..na).map(|a| safe_mul(sigma.prob(x, a), d.reduced_cost(i, x, a))).sum())
                .collect();
            minimal_solution(&step, &kernel, &leaks, DEFAULT_TOL, DEFAULT_MAX_SWEEPS)
        })
        .collect();
    ValueReport::assemble(per_cost, gamma, bounds)
}

/// Expected total cost `E ∫ c_i dt` under a stationary CTMDP policy.
pub fn evaluate_ct_stationary(m: &CtmdpModel, phi: &StationaryPolicy) -> ValueReport {
    let agg = aggregate_under_policy(m, phi);
    let leaks: Vec<bool> = agg.total_rate.iter().map(|&q| q == 0.0).collect();
    let per_cost = (0..m.n_costs())
        .map(|i| {
            let step: Vec<f64> = (0..m.n_states()).map(|x| safe_div(agg.costs[i][x], agg.total_rate[x])).collect();
            minimal_solution(&step, &agg.jump, &leaks, DEFAULT_TOL, DEFAULT_MAX_SWEEPS)
        })
        .collect();
    ValueReport::assemble(per_cost, m.initial(), m.bounds())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict {
    pub per_constraint: Vec<bool>,
    pub feasible: bool,
}

pub fn check_feasibility(report: &ValueReport, bounds: &[f64]) -> FeasibilityVerdict {
    let per_constraint: Vec<bool> = bounds
        .iter()
        .enumerate()
        .map(|(k, &d)| report.from_initial[k + 1] <= d + FEASIBILITY_TOL)
        .collect();
    FeasibilityVerdict { feasible: per_constraint.iter().all(|&b| b), per_constraint }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::reduce::build_jump_chain;

    fn m3_sigma() -> StationaryPolicy {
        StationaryPolicy::new(vec![vec![0.2, 0.8], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn lift_m3() {
        let m = catalog::m3();
        let cls = Classification::compute(&m).unwrap();
        let pi = lift_policy(&m3_sigma(), &m, &cls).unwrap();
        assert!((pi.prob(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((pi.prob(0, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(pi.row(1), &[0.0, 1.0]);
        assert_eq!(pi.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn lift_deterministic_row() {
        let m = catalog::m3();
        let cls = Classification::compute(&m).unwrap();
        let sigma = StationaryPolicy::deterministic(&[1, 1, 1], 2);
        let pi = lift_policy(&sigma, &m, &cls).unwrap();
        assert_eq!(pi.row(0), sigma.row(0));
        // S2 state is forced to f*
        assert_eq!(pi.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn lift_rejects_zero_rate_mass() {
        let m = catalog::m3();
        let cls = Classification::compute(&m).unwrap();
        let sigma = StationaryPolicy::deterministic(&[0, 0, 0], 2);
        assert_eq!(lift_policy(&sigma, &m, &cls), Err(LiftError::ZeroRateMass { state: 1, action: 0 }));
    }

    #[test]
    fn dt_evaluation_m3() {
        let m = catalog::m3();
        let d = build_jump_chain(&m);
        let r = evaluate_dt_stationary(&d, &m3_sigma(), m.initial(), m.bounds());
        assert!((r.values[0][0] - 0.4).abs() < 1e-12);
        assert!((r.values[1][0] - 0.4).abs() < 1e-12);
        assert!(r.converged && r.monotone);
        assert_eq!(r.feasible, vec![true]);
    }

    #[test]
    fn dt_evaluation_infinite_pair() {
        let m = catalog::m3();
        let d = build_jump_chain(&m);
        let sigma = StationaryPolicy::deterministic(&[0, 0, 0], 2);
        let r = evaluate_dt_stationary(&d, &sigma, m.initial(), m.bounds());
        assert_eq!(r.values[0][1], f64::INFINITY);
        assert_eq!(r.values[0][0], f64::INFINITY);
    }

    #[test]
    fn ct_evaluation_m3() {
        let m = catalog::m3();
        let cls = Classification::compute(&m).unwrap();
        let pi = lift_policy(&m3_sigma(), &m, &cls).unwrap();
        let r = evaluate_ct_stationary(&m, &pi);
        assert!((r.values[0][0] - 0.4).abs() < 1e-12);
        assert!((r.values[1][0] - 0.4).abs() < 1e-12);
        assert!((r.from_initial[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn ct_evaluation_psi_star_is_free_off_zeta() {
        let m = catalog::m3();
        let cls = Classification::compute(&m).unwrap();
        let psi = StationaryPolicy::deterministic(&cls.psi_star, 2);
        let r = evaluate_ct_stationary(&m, &psi);
        for x in (0..3).filter(|&x| !cls.in_zeta(x)) {
            assert!(r.values.iter().all(|row| row[x] == 0.0));
        }
    }

    #[test]
    fn ct_evaluation_resting_with_cost() {
        let r = evaluate_ct_stationary(&catalog::single_resting_state(1.0), &StationaryPolicy::deterministic(&[0], 1));
        assert_eq!(r.values[0][0], f64::INFINITY);
    }

    #[test]
    fn zero_cost_model_evaluates_to_zero() {
        let m = catalog::zero_costs(&catalog::m3());
        let d = build_jump_chain(&m);
        let sigma = StationaryPolicy::new(vec![vec![0.5, 0.5]; 3]).unwrap();
        let r = evaluate_dt_stationary(&d, &sigma, m.initial(), m.bounds());
        assert!(r.values.iter().flatten().all(|&v| v == 0.0));
        assert!(check_feasibility(&r, &[0.0]).feasible);
    }

    #[test]
    fn feasibility_verdicts() {
        let m = catalog::m3();
        let d = build_jump_chain(&m);
        let r = evaluate_dt_stationary(&d, &m3_sigma(), m.initial(), m.bounds());
        assert!(check_feasibility(&r, &[0.4]).feasible);
        assert!(!check_feasibility(&r, &[0.3]).feasible);
    }

    #[test]
    fn lift_is_scale_invariant() {
        let m = catalog::m3();
        let cls = Classification::compute(&m).unwrap();
        let a = StationaryPolicy::from_weights(vec![vec![1.0, 4.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let b = StationaryPolicy::from_weights(vec![vec![7.0, 28.0], vec![0.0, 3.0], vec![2.0, 0.0]]).unwrap();
        let (pa, pb) = (lift_policy(&a, &m, &cls).unwrap(), lift_policy(&b, &m, &cls).unwrap());
        for x in 0..3 {
            for k in 0..2 {
                assert!((pa.prob(x, k) - pb.prob(x, k)).abs() < 1e-15);
            }
        }
    }
}
