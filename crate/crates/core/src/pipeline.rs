//! End-to-end solve: classify, reduce, solve the occupation LP, extract the
//! jump-chain policy, lift it and evaluate the lifted policy exactly.

use serde_json::{json, Value};
use thiserror::Error;

use crate::classify::{Classification, ClassifyError};
use crate::format::{ext, policy_to_json};
use crate::lift::{evaluate_ct_stationary, evaluate_dt_stationary, lift_policy, LiftError, ValueReport};
use crate::model::{safe_mul, CtmdpModel, StationaryPolicy};
use crate::plan::{build_occupation_lp, extract_policy, solution_to_json, solve_simplex, OccupationSolution, PlanError, SolveStatus};
use crate::reduce::{build_jump_chain, DtmdpModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Lift(#[from] LiftError),
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub classification: Classification,
    pub dtmdp: DtmdpModel,
    pub solution: OccupationSolution,
    /// Present when the LP is optimal.
    pub sigma: Option<StationaryPolicy>,
    pub pi: Option<StationaryPolicy>,
    pub dt_values: Option<ValueReport>,
    pub ct_values: Option<ValueReport>,
}

impl SolveOutcome {
    pub fn status(&self) -> SolveStatus {
        self.solution.status
    }

    /// Optimal constrained value, `+∞` when no feasible policy has finite cost.
    pub fn value(&self) -> f64 {
        self.solution.objective
    }

    pub fn to_json(&self, m: &CtmdpModel) -> Value {
        let mut out = json!({
            "status": self.status().label(),
            "value": ext(self.value()),
            "lp": solution_to_json(&self.solution, m.states(), m.actions()),
        });
        if let (Some(sigma), Some(pi)) = (&self.sigma, &self.pi) {
            out["sigma"] = policy_to_json(m, sigma);
            out["pi"] = policy_to_json(m, pi);
        }
        if let Some(ct) = &self.ct_values {
            out["ct_evaluation"] = ct.to_json(m.states());
        }
        if let Some(dt) = &self.dt_values {
            out["dt_evaluation"] = dt.to_json(m.states());
        }
        out
    }
}

/// `Σ γ(x) V(x)` for the aggregate-cost value, the test for a finite-cost policy.
pub fn aggregate_value_from_initial(m: &CtmdpModel, cls: &Classification) -> f64 {
    m.initial().iter().zip(&cls.value.values).map(|(&g, &v)| safe_mul(g, v)).sum()
}

pub fn solve(m: &CtmdpModel) -> Result<SolveOutcome, PipelineError> {
    let cls = Classification::compute(m)?;
    let d = build_jump_chain(m);
    let lp = build_occupation_lp(&d, &cls, m.initial(), m.bounds())?;
    let finite = aggregate_value_from_initial(m, &cls).is_finite();
    let solution = solve_simplex(&lp, m.n_states(), m.n_actions(), m.bounds(), finite)?;
    let (mut sigma, mut pi, mut dt_values, mut ct_values) = (None, None, None, None);
    if solution.status == SolveStatus::Optimal {
        let s = extract_policy(&solution, &cls, &d);
        let p = lift_policy(&s, m, &cls)?;
        dt_values = Some(evaluate_dt_stationary(&d, &s, m.initial(), m.bounds()));
        ct_values = Some(evaluate_ct_stationary(m, &p));
        sigma = Some(s);
        pi = Some(p);
    }
    Ok(SolveOutcome { classification: cls, dtmdp: d, solution, sigma, pi, dt_values, ct_values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn m3_end_to_end() {
        let m = catalog::m3();
        let out = solve(&m).unwrap();
        assert_eq!(out.status(), SolveStatus::Optimal);
        assert!((out.value() - 0.4).abs() < 1e-9);
        let pi = out.pi.as_ref().unwrap();
        assert!((pi.prob(0, 0) - 1.0 / 3.0).abs() < 1e-12);
        let ct = out.ct_values.as_ref().unwrap();
        assert!((ct.from_initial[0] - 0.4).abs() < 1e-9);
        assert!((ct.from_initial[1] - 0.4).abs() < 1e-9);
        let j = out.to_json(&m);
        assert_eq!(j["status"], "optimal");
        assert!(j["pi"]["s0"]["a0"].as_f64().is_some());
    }

    #[test]
    fn infeasible_and_infinite() {
        let m = catalog::m3().with_bounds_unchecked(vec![-1.0]).unwrap();
        assert_eq!(solve(&m).unwrap().status(), SolveStatus::Infeasible);
        let out = solve(&catalog::single_resting_state(1.0)).unwrap();
        assert_eq!(out.status(), SolveStatus::NoFiniteValue);
        assert!(out.pi.is_none());
        assert_eq!(out.to_json(&catalog::single_resting_state(1.0))["value"], "inf");
    }
}
