//! Finite CTMDP primitives, extended-real arithmetic, policies and trajectories.
//!
//! A model carries off-diagonal transition rates `q̃(y|x,a)`, cost-rate tables
//! `c_0..c_N`, constraint constants `d_1..d_N` and an initial distribution.
//! All states share one action set. Numbers are plain `f64`; the value
//! `f64::INFINITY` plays the role of `+∞` and only ever arises from
//! divisions by a zero rate, never from input.

use std::fmt;

use thiserror::Error;

/// Row-sum tolerance for probability vectors.
pub const PROB_TOL: f64 = 1e-12;

/// Division on nonnegative extended reals with `0/0 = 0`, `0·∞ = 0` and
/// `x/0 = +∞` for `x > 0`.
pub fn safe_div(num: f64, den: f64) -> f64 {
    debug_assert!(num >= 0.0 && den >= 0.0, "safe_div on negative input");
    if num == 0.0 {
        0.0
    } else if den == 0.0 || num.is_infinite() {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Product on nonnegative extended reals with `0·∞ = 0`.
pub fn safe_mul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoStates,
    NoActions,
    NegativeRate { state: String, action: String, target: String, value: f64 },
    NonFiniteRate { state: String, action: String, target: String, value: f64 },
    SelfRate { state: String, action: String, value: f64 },
    NegativeCost { index: usize, state: String, action: String, value: f64 },
    NonFiniteCost { index: usize, state: String, action: String, value: f64 },
    NegativeBound { index: usize, value: f64 },
    NonFiniteBound { index: usize, value: f64 },
    NegativeInitial { state: String, value: f64 },
    NonFiniteInitial { state: String, value: f64 },
    InitialNotDistribution { sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "states must be nonempty"),
            Violation::NoActions => write!(f, "actions must be nonempty"),
            Violation::NegativeRate { state, action, target, value } => {
                write!(f, "negative rate {value} for {state}/{action} -> {target}")
            }
            Violation::NonFiniteRate { state, action, target, value } => {
                write!(f, "non-finite rate {value} for {state}/{action} -> {target}")
            }
            Violation::SelfRate { state, action, value } => {
                write!(f, "self-transition rate {value} for {state}/{action}; rates are off-diagonal")
            }
            Violation::NegativeCost { index, state, action, value } => {
                write!(f, "negative cost c_{index}({state},{action}) = {value}")
            }
            Violation::NonFiniteCost { index, state, action, value } => {
                write!(f, "non-finite cost c_{index}({state},{action}) = {value}")
            }
            Violation::NegativeBound { index, value } => write!(f, "negative bound d_{index} = {value}"),
            Violation::NonFiniteBound { index, value } => write!(f, "non-finite bound d_{index} = {value}"),
            Violation::NegativeInitial { state, value } => {
                write!(f, "negative initial probability {value} at {state}")
            }
            Violation::NonFiniteInitial { state, value } => {
                write!(f, "non-finite initial probability {value} at {state}")
            }
            Violation::InitialNotDistribution { sum } => {
                write!(f, "initial distribution sums to {sum}, expected 1")
            }
        }
    }
}

/// Every invariant a model violates. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model:\n{0}")]
    Invalid(ValidationReport),
    #[error("{0}")]
    Structure(String),
}

/// A finite constrained CTMDP.
///
/// Rates are stored densely as `[x][a][y]`, costs as `[i][x][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmdpModel {
    states: Vec<String>,
    actions: Vec<String>,
    rates: Vec<f64>,
    total_rates: Vec<f64>,
    costs: Vec<Vec<f64>>,
    bounds: Vec<f64>,
    initial: Vec<f64>,
}

impl CtmdpModel {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Number of constraints `N`; there are `N + 1` cost tables.
    pub fn n_constraints(&self) -> usize {
        self.bounds.len()
    }

    pub fn n_costs(&self) -> usize {
        self.costs.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|s| s == name)
    }

    /// Off-diagonal rate `q̃(y|x,a)`; zero on the diagonal.
    pub fn rate(&self, x: usize, a: usize, y: usize) -> f64 {
        self.rates[(x * self.n_actions() + a) * self.n_states() + y]
    }

    /// Rates out of `(x, a)` indexed by target state.
    pub fn rate_row(&self, x: usize, a: usize) -> &[f64] {
        let n = self.n_states();
        let off = (x * self.n_actions() + a) * n;
        &self.rates[off..off + n]
    }

    /// `q_x(a) = Σ_{y≠x} q̃(y|x,a)`.
    pub fn total_rate(&self, x: usize, a: usize) -> f64 {
        self.total_rates[x * self.n_actions() + a]
    }

    pub fn cost(&self, i: usize, x: usize, a: usize) -> f64 {
        self.costs[i][x * self.n_actions() + a]
    }

    /// `Σ_i c_i(x,a)`.
    pub fn aggregate_cost(&self, x: usize, a: usize) -> f64 {
        (0..self.n_costs()).map(|i| self.cost(i, x, a)).sum()
    }

    /// Constraint constants `d_1..d_N`; `bounds()[j - 1]` is `d_j`.
    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Copy of the model with new constraint constants, validated.
    pub fn with_bounds(&self, bounds: Vec<f64>) -> Result<CtmdpModel, ModelError> {
        let m = self.with_bounds_unchecked(bounds)?;
        m.into_validated()
    }

    /// Like [`with_bounds`](Self::with_bounds) but skips semantic validation.
    pub fn with_bounds_unchecked(&self, bounds: Vec<f64>) -> Result<CtmdpModel, ModelError> {
        if bounds.len() != self.bounds.len() {
            return Err(ModelError::Structure(format!(
                "expected {} bounds, got {}",
                self.bounds.len(),
                bounds.len()
            )));
        }
        let mut m = self.clone();
        m.bounds = bounds;
        Ok(m)
    }

    pub fn with_initial(&self, initial: Vec<f64>) -> Result<CtmdpModel, ModelError> {
        if initial.len() != self.n_states() {
            return Err(ModelError::Structure("initial distribution has wrong length".into()));
        }
        let mut m = self.clone();
        m.initial = initial;
        m.into_validated()
    }

    /// Drops constraint tables `c_1..c_N` and their bounds.
    pub fn without_constraints(&self) -> CtmdpModel {
        let mut m = self.clone();
        m.costs.truncate(1);
        m.bounds.clear();
        m
    }

    fn into_validated(self) -> Result<CtmdpModel, ModelError> {
        let report = validate_model(&self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(ModelError::Invalid(report))
        }
    }
}

/// Index-based construction of a [`CtmdpModel`]. Unset entries are zero.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    states: Vec<String>,
    actions: Vec<String>,
    rates: Vec<f64>,
    costs: Vec<Vec<f64>>,
    bounds: Vec<f64>,
    initial: Vec<f64>,
}

impl ModelBuilder {
    pub fn new<S: Into<String>, A: Into<String>>(
        states: impl IntoIterator<Item = S>,
        actions: impl IntoIterator<Item = A>,
        n_constraints: usize,
    ) -> Self {
        let states: Vec<String> = states.into_iter().map(Into::into).collect();
        let actions: Vec<String> = actions.into_iter().map(Into::into).collect();
        let (ns, na) = (states.len(), actions.len());
        ModelBuilder {
            rates: vec![0.0; ns * na * ns],
            costs: vec![vec![0.0; ns * na]; n_constraints + 1],
            bounds: vec![0.0; n_constraints],
            initial: vec![0.0; ns],
            states,
            actions,
        }
    }

    pub fn rate(mut self, x: usize, a: usize, y: usize, value: f64) -> Self {
        let (ns, na) = (self.states.len(), self.actions.len());
        self.rates[(x * na + a) * ns + y] = value;
        self
    }

    pub fn cost(mut self, i: usize, x: usize, a: usize, value: f64) -> Self {
        let na = self.actions.len();
        self.costs[i][x * na + a] = value;
        self
    }

    /// Sets `d_j` for `j` in `1..=N`.
    pub fn bound(mut self, j: usize, value: f64) -> Self {
        self.bounds[j - 1] = value;
        self
    }

    pub fn initial(mut self, x: usize, value: f64) -> Self {
        self.initial[x] = value;
        self
    }

    pub fn initial_vec(mut self, initial: Vec<f64>) -> Self {
        assert_eq!(initial.len(), self.states.len());
        self.initial = initial;
        self
    }

    pub fn build(self) -> Result<CtmdpModel, ModelError> {
        self.build_unchecked().into_validated()
    }

    /// Assembles the model without semantic validation.
    pub fn build_unchecked(self) -> CtmdpModel {
        let (ns, na) = (self.states.len(), self.actions.len());
        let total_rates = (0..ns * na)
            .map(|xa| {
                let x = xa / na;
                let row = &self.rates[xa * ns..(xa + 1) * ns];
                row.iter()
                    .enumerate()
                    .filter(|&(y, _)| y != x)
                    .map(|(_, r)| *r)
                    .sum()
            })
            .collect();
        CtmdpModel {
            states: self.states,
            actions: self.actions,
            rates: self.rates,
            total_rates,
            costs: self.costs,
            bounds: self.bounds,
            initial: self.initial,
        }
    }
}

pub fn validate_model(m: &CtmdpModel) -> ValidationReport {
    let mut v = Vec::new();
    if m.states.is_empty() {
        v.push(Violation::NoStates);
    }
    if m.actions.is_empty() {
        v.push(Violation::NoActions);
    }
    let (ns, na) = (m.n_states(), m.n_actions());
    for x in 0..ns {
        for a in 0..na {
            for y in 0..ns {
                let r = m.rate(x, a, y);
                let (state, action, target) =
                    (m.states[x].clone(), m.actions[a].clone(), m.states[y].clone());
                if y == x {
                    if r != 0.0 {
                        v.push(Violation::SelfRate { state, action, value: r });
                    }
                } else if !r.is_finite() {
                    v.push(Violation::NonFiniteRate { state, action, target, value: r });
                } else if r < 0.0 {
                    v.push(Violation::NegativeRate { state, action, target, value: r });
                }
            }
        }
    }
    for (i, table) in m.costs.iter().enumerate() {
        for x in 0..ns {
            for a in 0..na {
                let c = table[x * na + a];
                let (state, action) = (m.states[x].clone(), m.actions[a].clone());
                if !c.is_finite() {
                    v.push(Violation::NonFiniteCost { index: i, state, action, value: c });
                } else if c < 0.0 {
                    v.push(Violation::NegativeCost { index: i, state, action, value: c });
                }
            }
        }
    }
    for (k, &d) in m.bounds.iter().enumerate() {
        if !d.is_finite() {
            v.push(Violation::NonFiniteBound { index: k + 1, value: d });
        } else if d < 0.0 {
            v.push(Violation::NegativeBound { index: k + 1, value: d });
        }
    }
    let mut sum = 0.0;
    let mut initial_ok = true;
    for (x, &g) in m.initial.iter().enumerate() {
        if !g.is_finite() {
            v.push(Violation::NonFiniteInitial { state: m.states[x].clone(), value: g });
            initial_ok = false;
        } else if g < 0.0 {
            v.push(Violation::NegativeInitial { state: m.states[x].clone(), value: g });
            initial_ok = false;
        }
        sum += g;
    }
    if initial_ok && ns > 0 && (sum - 1.0).abs() > PROB_TOL {
        v.push(Violation::InitialNotDistribution { sum });
    }
    ValidationReport { violations: v }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("policy has {got} rows, model has {expected} states")]
    StateCount { expected: usize, got: usize },
    #[error("policy row {state} has {got} entries, model has {expected} actions")]
    ActionCount { state: usize, expected: usize, got: usize },
    #[error("policy row {state} has invalid entry {value}")]
    BadEntry { state: usize, value: f64 },
    #[error("policy row {state} sums to {sum}")]
    RowSum { state: usize, sum: f64 },
    #[error("schedule for state {state}: {reason}")]
    Schedule { state: usize, reason: String },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
}

fn check_row(state: usize, row: &[f64], n_actions: usize) -> Result<(), PolicyError> {
    if row.len() != n_actions {
        return Err(PolicyError::ActionCount { state, expected: n_actions, got: row.len() });
    }
    if let Some(&value) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(PolicyError::BadEntry { state, value });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(PolicyError::RowSum { state, sum });
    }
    Ok(())
}

/// Per-state action distribution `φ(a|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    n_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, PolicyError> {
        let n_actions = rows.first().map_or(0, Vec::len);
        for (x, row) in rows.iter().enumerate() {
            check_row(x, row, n_actions)?;
        }
        Ok(StationaryPolicy { n_actions, probs: rows.concat() })
    }

    /// Normalizes nonnegative weights row by row. Rows of zero weight are rejected.
    pub fn from_weights(rows: Vec<Vec<f64>>) -> Result<Self, PolicyError> {
        let normalized = rows
            .into_iter()
            .enumerate()
            .map(|(x, row)| {
                let s: f64 = row.iter().sum();
                if !(s > 0.0) || !s.is_finite() {
                    return Err(PolicyError::RowSum { state: x, sum: s });
                }
                Ok(row.into_iter().map(|w| w / s).collect())
            })
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        Self::new(normalized)
    }

    pub fn deterministic(choices: &[usize], n_actions: usize) -> Self {
        let mut probs = vec![0.0; choices.len() * n_actions];
        for (x, &a) in choices.iter().enumerate() {
            probs[x * n_actions + a] = 1.0;
        }
        StationaryPolicy { n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        if self.n_actions == 0 {
            0
        } else {
            self.probs.len() / self.n_actions
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.n_actions + a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states()).map(|x| self.row(x).to_vec()).collect()
    }

    /// The action chosen at `x` if the row is a unit vector.
    pub fn deterministic_action(&self, x: usize) -> Option<usize> {
        let row = self.row(x);
        row.iter().position(|&p| p == 1.0)
    }

    pub fn check_against(&self, m: &CtmdpModel) -> Result<(), PolicyError> {
        if self.n_states() != m.n_states() {
            return Err(PolicyError::StateCount { expected: m.n_states(), got: self.n_states() });
        }
        if self.n_actions != m.n_actions() {
            return Err(PolicyError::ActionCount {
                state: 0,
                expected: m.n_actions(),
                got: self.n_actions,
            });
        }
        Ok(())
    }
}

/// Piecewise-constant action distribution over the time elapsed since the
/// last jump. Row `k` applies on `[breakpoints[k-1], breakpoints[k])`; the
/// last row applies from the last breakpoint onwards.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseRow {
    breakpoints: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl PiecewiseRow {
    pub fn new(state: usize, breakpoints: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self, PolicyError> {
        if rows.len() != breakpoints.len() + 1 {
            return Err(PolicyError::Schedule {
                state,
                reason: format!("{} breakpoints need {} rows", breakpoints.len(), breakpoints.len() + 1),
            });
        }
        let mut prev = 0.0;
        for &b in &breakpoints {
            if !b.is_finite() || b <= prev {
                return Err(PolicyError::Schedule {
                    state,
                    reason: "breakpoints must be finite, positive and strictly increasing".into(),
                });
            }
            prev = b;
        }
        let na = rows[0].len();
        for row in &rows {
            check_row(state, row, na)?;
        }
        Ok(PiecewiseRow { breakpoints, rows })
    }

    pub fn constant(row: Vec<f64>) -> Self {
        PiecewiseRow { breakpoints: Vec::new(), rows: vec![row] }
    }

    /// Pieces as `(start, end, row)`; the last end is `+∞`.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, &[f64])> + '_ {
        (0..self.rows.len()).map(move |k| {
            let start = if k == 0 { 0.0 } else { self.breakpoints[k - 1] };
            let end = self.breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
            (start, end, self.rows[k].as_slice())
        })
    }

    pub fn at(&self, s: f64) -> &[f64] {
        let k = self.breakpoints.partition_point(|&b| b <= s);
        &self.rows[k]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_actions(&self) -> usize {
        self.rows[0].len()
    }
}

/// Closed-form time-dependent rules outside the finite-action setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedRule {
    /// The action equals the time elapsed since the last jump.
    ActionEqualsElapsedTime,
}

/// A Markov policy `π(da|x, s)` depending on the state and the time `s`
/// elapsed in the current sojourn.
#[derive(Debug, Clone, PartialEq)]
pub enum MarkovTimePolicy {
    Schedule(Vec<PiecewiseRow>),
    Named(NamedRule),
}

impl From<&StationaryPolicy> for MarkovTimePolicy {
    fn from(p: &StationaryPolicy) -> Self {
        MarkovTimePolicy::Schedule(
            (0..p.n_states()).map(|x| PiecewiseRow::constant(p.row(x).to_vec())).collect(),
        )
    }
}

/// Per-state averages of a model under a stationary policy.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedChain {
    /// `q̄(x) = Σ_a φ(a|x) q_x(a)`.
    pub total_rate: Vec<f64>,
    /// `c̄_i(x)`, indexed `[i][x]`.
    pub costs: Vec<Vec<f64>>,
    /// `p̄(y|x)`, indexed `[x][y]`; rows sum to 1 if `q̄(x) > 0`, else 0.
    pub jump: Vec<Vec<f64>>,
}

pub fn aggregate_under_policy(m: &CtmdpModel, phi: &StationaryPolicy) -> AggregatedChain {
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut total_rate = vec![0.0; ns];
    let mut costs = vec![vec![0.0; ns]; m.n_costs()];
    let mut jump = vec![vec![0.0; ns]; ns];
    for x in 0..ns {
        let mut flow = vec![0.0; ns];
        for a in 0..na {
            let w = phi.prob(x, a);
            if w == 0.0 {
                continue;
            }
            total_rate[x] += w * m.total_rate(x, a);
            for (i, c) in costs.iter_mut().enumerate() {
                c[x] += w * m.cost(i, x, a);
            }
            for (y, r) in m.rate_row(x, a).iter().enumerate() {
                if y != x {
                    flow[y] += w * r;
                }
            }
        }
        for y in 0..ns {
            jump[x][y] = safe_div(flow[y], total_rate[x]);
        }
    }
    AggregatedChain { total_rate, costs, jump }
}

/// Why a sojourn ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SojournEnd {
    Jump,
    /// The process stays in this state forever.
    Rest,
    /// Cut at the simulation horizon.
    Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sojourn {
    pub state: usize,
    pub start: f64,
    /// `θ_{n+1}`; `+∞` for a resting sojourn, truncated length for `Horizon`.
    pub duration: f64,
    pub end: SojournEnd,
    /// Realized `∫ c_i` over the sojourn; `+∞` is possible for `Rest`.
    pub costs: Vec<f64>,
}

/// One sample path: sojourns in order, jump times being their starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sojourns: Vec<Sojourn>,
    /// Total realized cost per index, `+∞` allowed.
    pub costs: Vec<f64>,
    /// Cost accumulated up to the horizon.
    pub costs_to_horizon: Vec<f64>,
    /// Set when the chain stops jumping.
    pub resting_state: Option<usize>,
    /// Set when the horizon or jump cap ended the path.
    pub truncated: bool,
}

impl Trajectory {
    pub fn jump_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.sojourns.iter().map(|s| s.start)
    }
}
