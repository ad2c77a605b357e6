//! State classification: zero-rate action sets, the four-way partition, the
//! `W` recursion, the positive-value set `ζ`, the aggregate Bellman value and
//! the selectors `f*` and `ψ*`.
//!
//! Every zero test here is exact. Rates and costs are model constants and a
//! sum of nonnegative doubles is zero only when every term is.

use serde_json::{json, Value};
use thiserror::Error;

use crate::format::ext;
use crate::graph::almost_sure_reach;
use crate::model::{safe_div, CtmdpModel};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_SWEEPS: usize = 100_000;
/// Values above this are reported as `+∞`.
pub const DIVERGENCE_CAP: f64 = 1e15;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("internal error: {0}")]
    Internal(String),
}

/// Which cost the value function and `W` recursion are built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostSelector {
    /// `Σ_i c_i`.
    Aggregate,
    Single(usize),
}

impl CostSelector {
    pub fn cost(self, m: &CtmdpModel, x: usize, a: usize) -> f64 {
        match self {
            CostSelector::Aggregate => m.aggregate_cost(x, a),
            CostSelector::Single(i) => m.cost(i, x, a),
        }
    }
}

/// `B(x) = {a : q_x(a) = 0}` per state.
pub fn compute_zero_rate_sets(m: &CtmdpModel) -> Vec<Vec<usize>> {
    (0..m.n_states())
        .map(|x| (0..m.n_actions()).filter(|&a| m.total_rate(x, a) == 0.0).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateClass {
    /// Some zero-rate action, positive rate-plus-cost everywhere, some positive rate.
    S1,
    /// `S1` with every rate zero.
    S1Hat,
    /// Rate plus aggregate cost vanishes for some action.
    S2,
    /// Every action has a positive rate.
    S3,
}

impl StateClass {
    pub fn label(self) -> &'static str {
        match self {
            StateClass::S1 => "S1",
            StateClass::S1Hat => "S1hat",
            StateClass::S2 => "S2",
            StateClass::S3 => "S3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    classes: Vec<StateClass>,
}

impl Partition {
    pub fn class(&self, x: usize) -> StateClass {
        self.classes[x]
    }

    pub fn in_s1(&self, x: usize) -> bool {
        matches!(self.classes[x], StateClass::S1 | StateClass::S1Hat)
    }

    pub fn in_s1_hat(&self, x: usize) -> bool {
        self.classes[x] == StateClass::S1Hat
    }

    pub fn in_s2(&self, x: usize) -> bool {
        self.classes[x] == StateClass::S2
    }

    pub fn in_s3(&self, x: usize) -> bool {
        self.classes[x] == StateClass::S3
    }

    fn members(&self, pred: impl Fn(usize) -> bool) -> Vec<usize> {
        (0..self.classes.len()).filter(|&x| pred(x)).collect()
    }

    pub fn s1(&self) -> Vec<usize> {
        self.members(|x| self.in_s1(x))
    }

    pub fn s1_hat(&self) -> Vec<usize> {
        self.members(|x| self.in_s1_hat(x))
    }

    pub fn s2(&self) -> Vec<usize> {
        self.members(|x| self.in_s2(x))
    }

    pub fn s3(&self) -> Vec<usize> {
        self.members(|x| self.in_s3(x))
    }
}

pub fn partition_states(m: &CtmdpModel) -> Partition {
    let classes = (0..m.n_states())
        .map(|x| {
            let acts = 0..m.n_actions();
            let min_rate = acts.clone().map(|a| m.total_rate(x, a)).fold(f64::INFINITY, f64::min);
            let max_rate = acts.clone().map(|a| m.total_rate(x, a)).fold(0.0, f64::max);
            let min_total = acts
                .map(|a| m.total_rate(x, a) + m.aggregate_cost(x, a))
                .fold(f64::INFINITY, f64::min);
            if min_total == 0.0 {
                StateClass::S2
            } else if min_rate > 0.0 {
                StateClass::S3
            } else if max_rate == 0.0 {
                StateClass::S1Hat
            } else {
                StateClass::S1
            }
        })
        .collect();
    Partition { classes }
}

/// Lowest-indexed action with `q_x(a) + Σ_i c_i(x,a) = 0` on each `S2` state.
pub fn select_fstar(m: &CtmdpModel, p: &Partition) -> Result<Vec<Option<usize>>, ClassifyError> {
    (0..m.n_states())
        .map(|x| {
            if !p.in_s2(x) {
                return Ok(None);
            }
            (0..m.n_actions())
                .find(|&a| m.total_rate(x, a) + m.aggregate_cost(x, a) == 0.0)
                .map(Some)
                .ok_or_else(|| ClassifyError::Internal(format!("S2 state {x} has no zero rate-plus-cost action")))
        })
        .collect()
}

/// The increasing sequence `W_1 ⊆ W_2 ⊆ …` and its limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WSets {
    /// Distinct members of the sequence, `levels[j - 1] = W_j`, the last being `W`.
    pub levels: Vec<Vec<bool>>,
    /// Recursion steps evaluated, including the one confirming stabilization.
    pub steps: usize,
}

impl WSets {
    pub fn union(&self) -> &[bool] {
        self.levels.last().expect("at least W_1")
    }

    pub fn contains(&self, x: usize) -> bool {
        self.union()[x]
    }

    /// Smallest `j` with `x ∈ W_j`.
    pub fn level_of(&self, x: usize) -> Option<usize> {
        self.levels.iter().position(|w| w[x]).map(|j| j + 1)
    }
}

/// `W_1 = {x : ∀a, c(x,a) > 0}`,
/// `W_{j+1} = {x : ∀a, q̃(W_j|x,a) + c(x,a) > 0}`, iterated to a fixed point.
pub fn compute_w(m: &CtmdpModel, sel: CostSelector) -> WSets {
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut levels: Vec<Vec<bool>> = Vec::new();
    let mut current = vec![false; ns];
    let mut steps = 0;
    loop {
        steps += 1;
        let next: Vec<bool> = (0..ns)
            .map(|x| {
                (0..na).all(|a| {
                    let inflow: f64 = (0..ns).filter(|&y| current[y]).map(|y| m.rate(x, a, y)).sum();
                    inflow + sel.cost(m, x, a) > 0.0
                })
            })
            .collect();
        if !levels.is_empty() && next == current {
            break;
        }
        current = next.clone();
        levels.push(next);
    }
    WSets { levels, steps }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanReport {
    pub values: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    /// Iterates never decreased at any state.
    pub monotone: bool,
}

impl BellmanReport {
    pub fn is_finite(&self, x: usize) -> bool {
        self.values[x].is_finite()
    }
}

fn successors(m: &CtmdpModel, x: usize, a: usize) -> Vec<usize> {
    (0..m.n_states()).filter(|&y| y != x && m.rate(x, a, y) > 0.0).collect()
}

/// One-step term `c/q + Σ_y (q̃(y)/q) V(y)` with the extended conventions.
fn bellman_term(m: &CtmdpModel, sel: CostSelector, v: &[f64], x: usize, a: usize) -> f64 {
    let q = m.total_rate(x, a);
    let mut t = safe_div(sel.cost(m, x, a), q);
    if q > 0.0 {
        for (y, &r) in m.rate_row(x, a).iter().enumerate() {
            if y != x && r > 0.0 {
                t += (r / q) * v[y];
            }
        }
    }
    t
}

/// Minimal nonnegative solution of
/// `V(x) = min_a { c(x,a)/q_x(a) + Σ_y q̃(y|x,a)/q_x(a) · V(y) }`
/// by value iteration from zero.
///
/// States that cannot reach the zero-value region `S \ W` with probability
/// one are `+∞` from the start: positive cost recurs forever there, and
/// plain iteration would only creep towards the divergence cap.
pub fn value_iterate_bellman(m: &CtmdpModel, sel: CostSelector, tol: f64, max_sweeps: usize) -> BellmanReport {
    let (ns, na) = (m.n_states(), m.n_actions());
    let w = compute_w(m, sel);
    let target: Vec<bool> = w.union().iter().map(|&b| !b).collect();
    let choices: Vec<Vec<Vec<usize>>> = (0..ns)
        .map(|x| {
            (0..na)
                .filter(|&a| safe_div(sel.cost(m, x, a), m.total_rate(x, a)).is_finite())
                .map(|a| successors(m, x, a))
                .collect()
        })
        .collect();
    let finite = almost_sure_reach(&target, &choices);
    let mut v: Vec<f64> = finite.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let mut monotone = true;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut next = v.clone();
        let mut change: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for x in (0..ns).filter(|&x| finite[x]) {
            let mut best = (0..na).map(|a| bellman_term(m, sel, &v, x, a)).fold(f64::INFINITY, f64::min);
            if best > DIVERGENCE_CAP {
                best = f64::INFINITY;
            }
            if best < v[x] {
                monotone = false;
            }
            if best.is_finite() {
                change = change.max((best - v[x]).abs());
                scale = scale.max(best);
            }
            next[x] = best;
        }
        v = next;
        if change <= tol * scale {
            converged = true;
            break;
        }
    }
    BellmanReport { values: v, converged, sweeps, monotone }
}

/// `ζ := W` for the aggregate cost, and `ψ*`.
///
/// Off `ζ`, `ψ*` takes the lowest-indexed action with zero aggregate cost and
/// every positive-rate successor outside `ζ`; it equals `f*` on `S2` and the
/// lowest index on `ζ`.
pub fn compute_zeta(
    m: &CtmdpModel,
    partition: &Partition,
    f_star: &[Option<usize>],
    w: &WSets,
) -> Result<(Vec<bool>, Vec<usize>), ClassifyError> {
    let zeta = w.union().to_vec();
    let psi = (0..m.n_states())
        .map(|x| {
            if zeta[x] {
                return Ok(0);
            }
            if partition.in_s2(x) {
                return f_star[x].ok_or_else(|| ClassifyError::Internal(format!("missing f* at S2 state {x}")));
            }
            (0..m.n_actions())
                .find(|&a| m.aggregate_cost(x, a) == 0.0 && successors(m, x, a).iter().all(|&y| !zeta[y]))
                .ok_or_else(|| ClassifyError::Internal(format!("state {x} outside zeta has no closed zero-cost action")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((zeta, psi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub zero_rate_actions: Vec<Vec<usize>>,
    pub partition: Partition,
    pub w: WSets,
    pub zeta: Vec<bool>,
    /// Aggregate-cost Bellman value, kept as an independent check on `ζ`.
    pub value: BellmanReport,
    pub f_star: Vec<Option<usize>>,
    pub psi_star: Vec<usize>,
}

impl Classification {
    pub fn compute(m: &CtmdpModel) -> Result<Self, ClassifyError> {
        let zero_rate_actions = compute_zero_rate_sets(m);
        let partition = partition_states(m);
        let f_star = select_fstar(m, &partition)?;
        let w = compute_w(m, CostSelector::Aggregate);
        let (zeta, psi_star) = compute_zeta(m, &partition, &f_star, &w)?;
        let value = value_iterate_bellman(m, CostSelector::Aggregate, DEFAULT_TOL, DEFAULT_MAX_SWEEPS);
        Ok(Classification { zero_rate_actions, partition, w, zeta, value, f_star, psi_star })
    }

    pub fn in_zeta(&self, x: usize) -> bool {
        self.zeta[x]
    }

    pub fn to_json(&self, m: &CtmdpModel) -> Value {
        let act = |a: usize| m.actions()[a].clone();
        let states: Vec<Value> = (0..m.n_states())
            .map(|x| {
                json!({
                    "state": m.states()[x],
                    "class": self.partition.class(x).label(),
                    "zero_rate_actions": self.zero_rate_actions[x].iter().map(|&a| act(a)).collect::<Vec<_>>(),
                    "w_level": self.w.level_of(x),
                    "in_zeta": self.zeta[x],
                    "value": ext(self.value.values[x]),
                    "f_star": self.f_star[x].map(act),
                    "psi_star": act(self.psi_star[x]),
                })
            })
            .collect();
        json!({
            "states": states,
            "w_steps": self.w.steps,
            "bellman": {
                "converged": self.value.converged,
                "sweeps": self.value.sweeps,
                "monotone": self.value.monotone,
            },
        })
    }
}
