//! Occupation-measure linear program for the constrained jump-chain problem.
//!
//! Variables are `μ(x,a) ≥ 0` for `x ∈ ζ` and non-forbidden pairs. Each
//! `x ∈ ζ` contributes the flow row
//! `Σ_a μ(x,a) − Σ_{(y,b)} p(x|y,b) μ(y,b) = γ(x)`; mass that leaves `ζ`
//! never returns, since `ψ*` keeps `ζ^c` closed at zero cost. The objective
//! and constraint rows use the reduced costs `ĉ_0` and `ĉ_j`.

use serde_json::{json, Value};
use thiserror::Error;

use crate::classify::Classification;
use crate::model::StationaryPolicy;
use crate::reduce::DtmdpModel;
use crate::simplex::{self, LinearProgram, LpOutcome, Row, RowKind, SimplexError};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("occupation LP needs the undiscounted jump chain")]
    Discounted,
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationLp {
    /// `(x, a)` per LP column.
    pub vars: Vec<(usize, usize)>,
    /// State per flow row; constraint rows follow in order `j = 1..N`.
    pub flow_states: Vec<usize>,
    pub program: LinearProgram,
}

impl OccupationLp {
    pub fn n_flow_rows(&self) -> usize {
        self.flow_states.len()
    }

    pub fn constraint_rows(&self) -> &[Row] {
        &self.program.rows[self.flow_states.len()..]
    }
}

pub fn build_occupation_lp(
    d: &DtmdpModel,
    cls: &Classification,
    gamma: &[f64],
    bounds: &[f64],
) -> Result<OccupationLp, PlanError> {
    if d.alpha().is_some() {
        return Err(PlanError::Discounted);
    }
    let (ns, na) = (d.n_states(), d.n_actions());
    let flow_states: Vec<usize> = (0..ns).filter(|&x| cls.in_zeta(x)).collect();
    let vars: Vec<(usize, usize)> = flow_states
        .iter()
        .flat_map(|&x| (0..na).map(move |a| (x, a)))
        .filter(|&(x, a)| !d.is_forbidden(x, a))
        .collect();
    let mut rows = Vec::with_capacity(flow_states.len() + bounds.len());
    for &x in &flow_states {
        let coeffs = vars
            .iter()
            .map(|&(y, b)| if y == x { 1.0 } else { 0.0 } - d.p(y, b, x))
            .collect();
        rows.push(Row { coeffs, kind: RowKind::Eq, rhs: gamma[x] });
    }
    for (j, &bound) in bounds.iter().enumerate() {
        let coeffs = vars.iter().map(|&(x, a)| d.reduced_cost(j + 1, x, a)).collect();
        rows.push(Row { coeffs, kind: RowKind::Le, rhs: bound });
    }
    let objective = vars.iter().map(|&(x, a)| d.reduced_cost(0, x, a)).collect();
    Ok(OccupationLp { vars, flow_states, program: LinearProgram { objective, rows } })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Every policy has infinite aggregate cost from the initial distribution.
    NoFiniteValue,
}

impl SolveStatus {
    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NoFiniteValue => "no-finite-value",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationSolution {
    pub status: SolveStatus,
    /// Dense `μ[x][a]`, zero off the LP support.
    pub mu: Vec<Vec<f64>>,
    pub objective: f64,
    /// `Σ ĉ_j μ` per constraint.
    pub constraint_values: Vec<f64>,
    /// `d_j − Σ ĉ_j μ`.
    pub slacks: Vec<f64>,
    pub basis: Vec<usize>,
    pub reduced_costs: Vec<f64>,
    pub max_flow_residual: f64,
    pub pivots: usize,
}

/// Solves the LP. `aggregate_value_finite` tells an infeasible LP whose
/// cause is infinite aggregate cost apart from one cut off by the bounds.
pub fn solve_simplex(
    lp: &OccupationLp,
    n_states: usize,
    n_actions: usize,
    bounds: &[f64],
    aggregate_value_finite: bool,
) -> Result<OccupationSolution, PlanError> {
    let mut mu = vec![vec![0.0; n_actions]; n_states];
    match simplex::solve(&lp.program)? {
        LpOutcome::Infeasible { .. } => Ok(OccupationSolution {
            status: if aggregate_value_finite { SolveStatus::Infeasible } else { SolveStatus::NoFiniteValue },
            mu,
            objective: f64::INFINITY,
            constraint_values: vec![],
            slacks: vec![],
            basis: vec![],
            reduced_costs: vec![],
            max_flow_residual: f64::NAN,
            pivots: 0,
        }),
        LpOutcome::Optimal(s) => {
            for (&(x, a), &v) in lp.vars.iter().zip(&s.x) {
                mu[x][a] = v;
            }
            let constraint_values: Vec<f64> = lp
                .constraint_rows()
                .iter()
                .map(|r| r.coeffs.iter().zip(&s.x).map(|(c, v)| c * v).sum())
                .collect();
            let slacks = bounds.iter().zip(&constraint_values).map(|(d, u)| d - u).collect();
            let max_flow_residual = lp.program.rows[..lp.n_flow_rows()]
                .iter()
                .map(|r| (r.coeffs.iter().zip(&s.x).map(|(c, v)| c * v).sum::<f64>() - r.rhs).abs())
                .fold(0.0, f64::max);
            Ok(OccupationSolution {
                status: SolveStatus::Optimal,
                mu,
                objective: s.objective,
                constraint_values,
                slacks,
                basis: s.basis,
                reduced_costs: s.reduced_costs,
                max_flow_residual,
                pivots: s.pivots,
            })
        }
    }
}

/// Stationary jump-chain policy from an optimal occupation measure.
///
/// Rows with LP mass are normalized `μ(x,·)`. Off `ζ` the row is `δ_{ψ*(x)}`
/// (which is `δ_{f*(x)}` on `S2`); on zero-mass states of `ζ` it is `ψ*` if
/// allowed, else the lowest-indexed non-forbidden action, else action 0.
pub fn extract_policy(sol: &OccupationSolution, cls: &Classification, d: &DtmdpModel) -> StationaryPolicy {
    let (ns, na) = (d.n_states(), d.n_actions());
    let mut rows = Vec::with_capacity(ns);
    for x in 0..ns {
        let mass: f64 = sol.mu[x].iter().sum();
        if cls.in_zeta(x) && mass > 0.0 {
            rows.push(sol.mu[x].iter().map(|v| v / mass).collect());
            continue;
        }
        let choice = if !cls.in_zeta(x) {
            cls.psi_star[x]
        } else if !d.is_forbidden(x, cls.psi_star[x]) {
            cls.psi_star[x]
        } else {
            (0..na).find(|&a| !d.is_forbidden(x, a)).unwrap_or(0)
        };
        let mut row = vec![0.0; na];
        row[choice] = 1.0;
        rows.push(row);
    }
    StationaryPolicy::new(rows).expect("normalized rows are distributions")
}

pub fn solution_to_json(sol: &OccupationSolution, states: &[String], actions: &[String]) -> Value {
    let mu: serde_json::Map<String, Value> = sol
        .mu
        .iter()
        .enumerate()
        .flat_map(|(x, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(move |(a, v)| (format!("{}/{}", states[x], actions[a]), json!(v)))
        })
        .collect();
    json!({
        "status": sol.status.label(),
        "lp_objective": crate::format::ext(sol.objective),
        "constraint_values": sol.constraint_values,
        "slacks": sol.slacks,
        "mu": mu,
        "basis": sol.basis,
        "max_flow_residual": if sol.max_flow_residual.is_nan() { Value::Null } else { json!(sol.max_flow_residual) },
        "pivots": sol.pivots,
    })
}
