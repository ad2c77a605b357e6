//! Monte Carlo trajectories of a CTMDP under Markov policies that may depend
//! on the time elapsed since the last jump.
//!
//! Each sojourn draws a unit exponential `E` and inverts the cumulative
//! hazard `Λ(s) = ∫_0^s Σ_a π(a|x,u) q_x(a) du`. Policy rows are piecewise
//! constant in `s`, so `Λ` is piecewise linear and every integral along a
//! sojourn is computed exactly. If `E` exceeds `Λ(∞)` the sojourn never
//! ends and the process rests in `x` forever.
//!
//! Trajectory `k` draws from `ChaCha8Rng` seeded with the batch seed on
//! stream `k`, so a batch does not depend on how rayon schedules work.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::format::ext;
use crate::model::{
    safe_mul, CtmdpModel, MarkovTimePolicy, PiecewiseRow, PolicyError, Sojourn, SojournEnd, StationaryPolicy,
    Trajectory,
};

pub const DEFAULT_T_MAX: f64 = 1e4;
pub const DEFAULT_K_MAX: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("named rules need their own scenario and cannot drive a finite model")]
    NamedRule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_traj: usize,
    pub t_max: f64,
    pub k_max: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n_traj: usize, seed: u64) -> Self {
        SimConfig { n_traj, t_max: DEFAULT_T_MAX, k_max: DEFAULT_K_MAX, seed }
    }

    fn check(&self) -> Result<(), SimError> {
        if self.n_traj == 0 || self.k_max == 0 {
            return Err(SimError::Config("n_traj and k_max must be positive".into()));
        }
        if !(self.t_max > 0.0) {
            return Err(SimError::Config(format!("horizon must be positive, got {}", self.t_max)));
        }
        Ok(())
    }
}

/// The generator used for trajectory `index` of a batch.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Sample mean and standard error of i.i.d. draws, `+∞` entries allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    /// Fraction of draws equal to `+∞`.
    pub infinite_fraction: f64,
}

impl Estimate {
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = Moments::default();
        for x in xs {
            acc.push(x);
        }
        acc.finish()
    }

    pub fn to_json(&self) -> Value {
        json!({ "mean": ext(self.mean), "stderr": ext(self.stderr), "infinite_fraction": self.infinite_fraction })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    infinite: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        if x.is_infinite() {
            self.infinite += 1;
        } else {
            self.sum += x;
            self.sum_sq += x * x;
        }
    }

    fn finish(&self) -> Estimate {
        if self.count == 0 {
            return Estimate { mean: 0.0, stderr: 0.0, infinite_fraction: 0.0 };
        }
        let n = self.count as f64;
        if self.infinite > 0 {
            return Estimate { mean: f64::INFINITY, stderr: f64::INFINITY, infinite_fraction: self.infinite as f64 / n };
        }
        let mean = self.sum / n;
        let var = if self.count > 1 { ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        Estimate { mean, stderr: (var / n).sqrt(), infinite_fraction: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostEstimate {
    /// Mean of the realized total cost, `+∞` if any path rests at positive cost.
    pub total: Estimate,
    /// Mean of the cost accumulated up to the horizon.
    pub to_horizon: Estimate,
    /// Set when the total is infinite or the truncated paths still carry a
    /// positive cost rate at the horizon, so the estimate grows with it.
    pub unbounded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub model: CtmdpModel,
    pub policy: MarkovTimePolicy,
    pub config: SimConfig,
    pub trajectories: Vec<Trajectory>,
    pub costs: Vec<CostEstimate>,
    pub horizon_hits: usize,
    pub jump_cap_hits: usize,
}

impl TrajectoryBatch {
    fn rows(&self) -> &[PiecewiseRow] {
        match &self.policy {
            MarkovTimePolicy::Schedule(rows) => rows,
            MarkovTimePolicy::Named(_) => unreachable!("batches are built from schedules"),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n_traj": self.config.n_traj,
            "seed": self.config.seed,
            "t_max": self.config.t_max,
            "k_max": self.config.k_max,
            "costs": self.costs.iter().map(|c| json!({
                "total": c.total.to_json(),
                "to_horizon": c.to_horizon.to_json(),
                "unbounded": c.unbounded,
            })).collect::<Vec<_>>(),
            "truncation": {
                "horizon_hits": self.horizon_hits,
                "jump_cap_hits": self.jump_cap_hits,
                "resting_paths": self.trajectories.iter().filter(|t| t.resting_state.is_some()).count(),
            },
        })
    }
}

fn check_schedule(m: &CtmdpModel, policy: &MarkovTimePolicy) -> Result<(), SimError> {
    let rows = match policy {
        MarkovTimePolicy::Schedule(rows) => rows,
        MarkovTimePolicy::Named(_) => return Err(SimError::NamedRule),
    };
    if rows.len() != m.n_states() {
        return Err(PolicyError::StateCount { expected: m.n_states(), got: rows.len() }.into());
    }
    for (x, r) in rows.iter().enumerate() {
        if r.n_actions() != m.n_actions() {
            return Err(PolicyError::ActionCount { state: x, expected: m.n_actions(), got: r.n_actions() }.into());
        }
    }
    Ok(())
}

fn weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    WeightedIndex::new(weights).expect("weights have positive mass").sample(rng)
}

fn hazard(m: &CtmdpModel, x: usize, row: &[f64]) -> f64 {
    row.iter().enumerate().map(|(a, p)| p * m.total_rate(x, a)).sum()
}

fn cost_rate(m: &CtmdpModel, i: usize, x: usize, row: &[f64]) -> f64 {
    row.iter().enumerate().map(|(a, p)| p * m.cost(i, x, a)).sum()
}

/// `∫_0^s Σ_a π(a|x,u) c_i(x,a) du` for `s` possibly infinite.
fn integrate_cost(m: &CtmdpModel, i: usize, x: usize, sched: &PiecewiseRow, s: f64) -> f64 {
    let mut total = 0.0;
    for (lo, hi, row) in sched.pieces() {
        if lo >= s {
            break;
        }
        total += safe_mul(cost_rate(m, i, x, row), hi.min(s) - lo);
    }
    total
}

fn simulate_one(m: &CtmdpModel, rows: &[PiecewiseRow], cfg: &SimConfig, index: usize) -> Trajectory {
    let mut rng = trajectory_rng(cfg.seed, index);
    let nc = m.n_costs();
    let mut x = weighted(&mut rng, m.initial());
    let mut t = 0.0;
    let mut traj = Trajectory {
        sojourns: Vec::new(),
        costs: vec![0.0; nc],
        costs_to_horizon: vec![0.0; nc],
        resting_state: None,
        truncated: false,
    };
    loop {
        if traj.sojourns.len() >= cfg.k_max {
            traj.truncated = true;
            break;
        }
        let sched = &rows[x];
        let e: f64 = rng.sample(Exp1);
        // Invert the piecewise-linear cumulative hazard.
        let mut lambda = 0.0;
        let mut jump: Option<(f64, &[f64])> = None;
        for (lo, hi, row) in sched.pieces() {
            let h = hazard(m, x, row);
            if h > 0.0 && lambda + h * (hi - lo) > e {
                jump = Some((lo + (e - lambda) / h, row));
                break;
            }
            lambda += h * (hi - lo);
        }
        let remaining = cfg.t_max - t;
        let duration = jump.map_or(f64::INFINITY, |(s, _)| s);
        let horizon_cut = duration > remaining && jump.is_some();
        let end = match jump {
            None => SojournEnd::Rest,
            Some(_) if horizon_cut => SojournEnd::Horizon,
            Some(_) => SojournEnd::Jump,
        };
        let shown = if horizon_cut { remaining } else { duration };
        let costs: Vec<f64> = (0..nc).map(|i| integrate_cost(m, i, x, sched, shown)).collect();
        for i in 0..nc {
            traj.costs[i] += costs[i];
            traj.costs_to_horizon[i] += integrate_cost(m, i, x, sched, duration.min(remaining));
        }
        traj.sojourns.push(Sojourn { state: x, start: t, duration: shown, end, costs });
        match end {
            SojournEnd::Rest => {
                traj.resting_state = Some(x);
                break;
            }
            SojournEnd::Horizon => {
                traj.truncated = true;
                break;
            }
            SojournEnd::Jump => {
                let (_, row) = jump.expect("jump sojourn");
                let mut w = vec![0.0; m.n_states()];
                for (a, &p) in row.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                    for (y, &r) in m.rate_row(x, a).iter().enumerate() {
                        if y != x {
                            w[y] += p * r;
                        }
                    }
                }
                t += duration;
                x = weighted(&mut rng, &w);
            }
        }
    }
    traj
}

/// Simulates `cfg.n_traj` independent paths. Results are identical for any
/// rayon pool size.
pub fn simulate(m: &CtmdpModel, policy: &MarkovTimePolicy, cfg: SimConfig) -> Result<TrajectoryBatch, SimError> {
    cfg.check()?;
    check_schedule(m, policy)?;
    let MarkovTimePolicy::Schedule(rows) = policy else { unreachable!() };
    let trajectories: Vec<Trajectory> =
        (0..cfg.n_traj).into_par_iter().map(|k| simulate_one(m, rows, &cfg, k)).collect();

    let costs = (0..m.n_costs())
        .map(|i| {
            let total = Estimate::from_samples(trajectories.iter().map(|t| t.costs[i]));
            let to_horizon = Estimate::from_samples(trajectories.iter().map(|t| t.costs_to_horizon[i]));
            let growing = trajectories.iter().any(|t| {
                t.truncated
                    && t.sojourns.last().is_some_and(|s| {
                        s.end == SojournEnd::Horizon && cost_rate(m, i, s.state, rows[s.state].at(s.duration)) > 0.0
                    })
            });
            CostEstimate { unbounded: total.mean.is_infinite() || growing, total, to_horizon }
        })
        .collect();
    Ok(TrajectoryBatch {
        model: m.clone(),
        policy: policy.clone(),
        config: cfg,
        horizon_hits: trajectories
            .iter()
            .filter(|t| t.sojourns.last().is_some_and(|s| s.end == SojournEnd::Horizon))
            .count(),
        jump_cap_hits: trajectories.iter().filter(|t| t.truncated && t.sojourns.len() >= cfg.k_max).count(),
        trajectories,
        costs,
    })
}

pub fn simulate_stationary(m: &CtmdpModel, phi: &StationaryPolicy, cfg: SimConfig) -> Result<TrajectoryBatch, SimError> {
    simulate(m, &MarkovTimePolicy::from(phi), cfg)
}

/// `∫_{lo}^{hi} e^{-α(t0+u)} du`, or `hi − lo` without discounting.
fn time_weight(alpha: Option<f64>, t0: f64, lo: f64, hi: f64) -> f64 {
    match alpha {
        None => hi - lo,
        Some(al) => {
            let tail = if hi.is_finite() { (-al * (t0 + hi)).exp() } else { 0.0 };
            ((-al * (t0 + lo)).exp() - tail) / al
        }
    }
}

/// Per-sojourn integral of `w(a)·π(a|x,u)` over the sojourn, per action.
fn sojourn_integrals(
    sched: &PiecewiseRow,
    s: &Sojourn,
    alpha: Option<f64>,
    weight: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0; sched.n_actions()];
    for (lo, hi, row) in sched.pieces() {
        if lo >= s.duration {
            break;
        }
        let tw = time_weight(alpha, s.start, lo, hi.min(s.duration));
        for (a, &p) in row.iter().enumerate() {
            out[a] += safe_mul(p * weight(a), tw);
        }
    }
    out
}

/// Sample estimate of `M^n(x,a)` for `n ≤ n_max`, discounted when `alpha` is given.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyEstimate {
    pub alpha: Option<f64>,
    pub n_traj: usize,
    /// `[n][x][a]`.
    pub mass: Vec<Vec<Vec<Estimate>>>,
    /// `M^n(S×A)` per `n`.
    pub total: Vec<Estimate>,
}

impl OccupancyEstimate {
    /// Checks `M^n(S×A) ≤ 1 + 3·stderr` for every `n`.
    pub fn mass_bound_holds(&self) -> bool {
        self.total.iter().all(|e| e.mean <= 1.0 + 3.0 * e.stderr)
    }

    pub fn to_json(&self, m: &CtmdpModel) -> Value {
        let tables: Vec<Value> = self
            .mass
            .iter()
            .zip(&self.total)
            .map(|(table, total)| {
                json!({ "entries": entry_map(m, table), "total": total.to_json() })
            })
            .collect();
        json!({ "alpha": self.alpha, "n_traj": self.n_traj, "by_jump": tables })
    }
}

fn entry_map(m: &CtmdpModel, table: &[Vec<Estimate>]) -> serde_json::Map<String, Value> {
    let mut out = serde_json::Map::new();
    for (x, row) in table.iter().enumerate() {
        for (a, e) in row.iter().enumerate() {
            if e.mean != 0.0 {
                out.insert(format!("{}/{}", m.states()[x], m.actions()[a]), e.to_json());
            }
        }
    }
    out
}

pub fn estimate_occupancy(batch: &TrajectoryBatch, n_max: usize, alpha: Option<f64>) -> OccupancyEstimate {
    let m = &batch.model;
    let (ns, na) = (m.n_states(), m.n_actions());
    let rows = batch.rows();
    let mut acc = vec![vec![vec![Moments::default(); na]; ns]; n_max + 1];
    let mut totals = vec![Moments::default(); n_max + 1];
    for traj in &batch.trajectories {
        for n in 0..=n_max {
            let contrib = traj.sojourns.get(n).map(|s| {
                let shift = alpha.unwrap_or(0.0);
                (s.state, sojourn_integrals(&rows[s.state], s, alpha, |a| shift + m.total_rate(s.state, a)))
            });
            let mut sum = 0.0;
            for x in 0..ns {
                for a in 0..na {
                    let v = match &contrib {
                        Some((sx, vals)) if *sx == x => vals[a],
                        _ => 0.0,
                    };
                    sum += v;
                    acc[n][x][a].push(v);
                }
            }
            totals[n].push(sum);
        }
    }
    OccupancyEstimate {
        alpha,
        n_traj: batch.trajectories.len(),
        mass: acc.iter().map(|t| t.iter().map(|r| r.iter().map(Moments::finish).collect()).collect()).collect(),
        total: totals.iter().map(Moments::finish).collect(),
    }
}

/// Sample estimate of the (possibly discounted) occupation measure `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationEstimate {
    pub alpha: Option<f64>,
    /// `[x][a]`; `+∞` where some path rests in `x` with `π(a|x) > 0` undiscounted.
    pub time: Vec<Vec<Estimate>>,
    /// Same integrals cut at the horizon.
    pub time_to_horizon: Vec<Vec<Estimate>>,
    pub horizon: f64,
    pub truncated_paths: usize,
    /// Upper bound on the mass missed by horizon truncation; `+∞` if unknown.
    pub truncated_mass_bound: f64,
    /// Entries that grow without bound in the horizon.
    pub unbounded: Vec<(usize, usize)>,
}

impl OccupationEstimate {
    pub fn to_json(&self, m: &CtmdpModel) -> Value {
        json!({
            "alpha": self.alpha,
            "entries": entry_map(m, &self.time),
            "entries_to_horizon": entry_map(m, &self.time_to_horizon),
            "horizon": self.horizon,
            "truncated_paths": self.truncated_paths,
            "truncated_mass_bound": ext(self.truncated_mass_bound),
            "unbounded": self.unbounded.iter()
                .map(|&(x, a)| format!("{}/{}", m.states()[x], m.actions()[a]))
                .collect::<Vec<_>>(),
        })
    }
}

pub fn estimate_occupation(batch: &TrajectoryBatch, alpha: Option<f64>) -> OccupationEstimate {
    let m = &batch.model;
    let (ns, na) = (m.n_states(), m.n_actions());
    let rows = batch.rows();
    let t_max = batch.config.t_max;
    let mut full = vec![vec![Moments::default(); na]; ns];
    let mut cut = vec![vec![Moments::default(); na]; ns];
    let mut truncated_paths = 0;
    for traj in &batch.trajectories {
        let mut f = vec![vec![0.0; na]; ns];
        let mut c = vec![vec![0.0; na]; ns];
        for s in &traj.sojourns {
            let vals = sojourn_integrals(&rows[s.state], s, alpha, |_| 1.0);
            let clipped = Sojourn { duration: s.duration.min(t_max - s.start), ..s.clone() };
            let vals_cut = sojourn_integrals(&rows[s.state], &clipped, alpha, |_| 1.0);
            for a in 0..na {
                f[s.state][a] += vals[a];
                c[s.state][a] += vals_cut[a];
            }
        }
        if traj.truncated {
            truncated_paths += 1;
        }
        for x in 0..ns {
            for a in 0..na {
                full[x][a].push(f[x][a]);
                cut[x][a].push(c[x][a]);
            }
        }
    }
    let time: Vec<Vec<Estimate>> = full.iter().map(|r| r.iter().map(Moments::finish).collect()).collect();
    let unbounded =
        (0..ns).flat_map(|x| (0..na).map(move |a| (x, a))).filter(|&(x, a)| time[x][a].mean.is_infinite()).collect();
    let frac = truncated_paths as f64 / batch.trajectories.len().max(1) as f64;
    let truncated_mass_bound = match alpha {
        _ if truncated_paths == 0 => 0.0,
        Some(al) => frac * (-al * t_max).exp() / al,
        None => f64::INFINITY,
    };
    OccupationEstimate {
        alpha,
        time,
        time_to_horizon: cut.iter().map(|r| r.iter().map(Moments::finish).collect()).collect(),
        horizon: t_max,
        truncated_paths,
        truncated_mass_bound,
        unbounded,
    }
}

/// The one-transient-state example with `q(a) = c_0(a) = e^{-a}` driven by
/// the rule `a(t) = t`, whose embedded chain has value 1 under every policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ex1Scenario {
    pub seed: u64,
    pub n_traj: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ex1Report {
    pub n_traj: usize,
    pub seed: u64,
    pub ctmdp_cost_estimate: f64,
    pub ctmdp_cost_stderr: f64,
    pub p_no_jump_estimate: f64,
    pub p_no_jump_stderr: f64,
    pub dtmdp_value: f64,
    /// `ctmdp_cost_estimate + 3·stderr < dtmdp_value`.
    pub gap_significant: bool,
}

impl Ex1Report {
    pub fn to_json(&self) -> Value {
        json!({
            "n_traj": self.n_traj,
            "seed": self.seed,
            "ctmdp_cost_estimate": self.ctmdp_cost_estimate,
            "ctmdp_cost_stderr": self.ctmdp_cost_stderr,
            "p_no_jump_estimate": self.p_no_jump_estimate,
            "p_no_jump_stderr": self.p_no_jump_stderr,
            "dtmdp_value": self.dtmdp_value,
            "gap": self.dtmdp_value - self.ctmdp_cost_estimate,
            "gap_significant": self.gap_significant,
        })
    }
}

/// One path of the example: `(realized cost, jumped)`.
///
/// Under `a(t) = t` the hazard is `e^{-t}`, so `Λ(t) = 1 − e^{-t}` and
/// `Λ(∞) = 1`. A draw `E < 1` jumps at `θ = −ln(1 − E)`; otherwise the path
/// rests in the transient state, where the cost rate `e^{-t}` integrates to 1.
fn ex1_path(seed: u64, index: usize) -> (f64, bool) {
    let e: f64 = trajectory_rng(seed, index).sample(Exp1);
    if e < 1.0 {
        let theta = -(-e).ln_1p();
        (-(-theta).exp_m1(), true)
    } else {
        (1.0, false)
    }
}

pub fn run_ex1(scenario: Ex1Scenario) -> Result<Ex1Report, SimError> {
    if scenario.n_traj == 0 {
        return Err(SimError::Config("n_traj must be positive".into()));
    }
    let paths: Vec<(f64, bool)> = (0..scenario.n_traj).into_par_iter().map(|k| ex1_path(scenario.seed, k)).collect();
    let cost = Estimate::from_samples(paths.iter().map(|p| p.0));
    let rest = Estimate::from_samples(paths.iter().map(|p| if p.1 { 0.0 } else { 1.0 }));
    // c/q ≡ 1 at the transient state and the absorbing state is free.
    let dtmdp_value = 1.0;
    Ok(Ex1Report {
        n_traj: scenario.n_traj,
        seed: scenario.seed,
        ctmdp_cost_estimate: cost.mean,
        ctmdp_cost_stderr: cost.stderr,
        p_no_jump_estimate: rest.mean,
        p_no_jump_stderr: rest.stderr,
        dtmdp_value,
        gap_significant: cost.mean + 3.0 * cost.stderr < dtmdp_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::classify::Classification;
    use crate::lift::{evaluate_ct_stationary, lift_policy};

    fn m3_lifted() -> StationaryPolicy {
        let m = catalog::m3();
        let cls = Classification::compute(&m).unwrap();
        let sigma = StationaryPolicy::new(vec![vec![0.2, 0.8], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        lift_policy(&sigma, &m, &cls).unwrap()
    }

    fn within(e: &Estimate, exact: f64, k: f64) -> bool {
        (e.mean - exact).abs() <= k * e.stderr + 1e-12
    }

    #[test]
    fn m3_cost_matches_evaluator() {
        let m = catalog::m3();
        let pi = m3_lifted();
        let exact = evaluate_ct_stationary(&m, &pi);
        let batch = simulate_stationary(&m, &pi, SimConfig::new(20_000, 3)).unwrap();
        for i in 0..2 {
            assert!(within(&batch.costs[i].total, exact.from_initial[i], 4.0), "{i}: {:?}", batch.costs[i]);
        }
        assert_eq!(batch.horizon_hits, 0);
    }

    #[test]
    fn m3_occupancy_and_occupation() {
        let m = catalog::m3();
        let batch = simulate_stationary(&m, &m3_lifted(), SimConfig::new(20_000, 11)).unwrap();
        let occ = estimate_occupancy(&batch, 4, None);
        assert!(within(&occ.mass[0][0][0], 0.2, 4.0));
        assert!(occ.mass_bound_holds());
        assert!(occ.total[3].mean == 0.0 && occ.total[4].mean == 0.0);

        let eta = estimate_occupation(&batch, None);
        assert!(within(&eta.time[0][0], 0.2, 4.0));
        assert!(within(&eta.time[1][1], 0.2, 4.0));
        // every path rests in s2 under a0
        assert_eq!(eta.unbounded, vec![(2, 0)]);

        let disc = estimate_occupation(&batch, Some(1.0));
        let s0 = disc.time[0][0].mean + disc.time[0][1].mean;
        assert!((s0 - 3.0 / 8.0).abs() < 4.0 * (disc.time[0][0].stderr + disc.time[0][1].stderr));
    }

    #[test]
    fn resting_zero_cost_state() {
        let m = catalog::single_resting_state(0.0);
        let batch = simulate_stationary(&m, &StationaryPolicy::deterministic(&[0], 1), SimConfig::new(50, 1)).unwrap();
        for t in &batch.trajectories {
            assert_eq!(t.sojourns.len(), 1);
            assert_eq!(t.sojourns[0].duration, f64::INFINITY);
            assert_eq!(t.costs[0], 0.0);
        }
        assert!(!batch.costs[0].unbounded);
    }

    #[test]
    fn resting_with_cost_is_unbounded() {
        let m = catalog::m3().with_initial(vec![0.0, 1.0, 0.0]).unwrap();
        let cfg = SimConfig { t_max: 50.0, ..SimConfig::new(10, 2) };
        let batch = simulate_stationary(&m, &StationaryPolicy::deterministic(&[0, 0, 0], 2), cfg).unwrap();
        assert!(batch.costs[0].unbounded);
        assert_eq!(batch.costs[0].total.mean, f64::INFINITY);
        assert_eq!(batch.costs[0].to_horizon.mean, 50.0);
    }

    #[test]
    fn horizon_truncation_reported() {
        let m = catalog::m3();
        let cfg = SimConfig { t_max: 0.05, ..SimConfig::new(200, 5) };
        let batch = simulate_stationary(&m, &m3_lifted(), cfg).unwrap();
        assert!(batch.horizon_hits > 0);
        assert!(batch.costs[0].unbounded);
        let eta = estimate_occupation(&batch, None);
        assert!(eta.truncated_paths > 0 && eta.truncated_mass_bound.is_infinite());
    }

    #[test]
    fn schedule_with_breakpoint() {
        // Rate 1 on [0,1), then zero: a path rests iff E ≥ 1.
        let m = catalog::m3();
        let s0 = PiecewiseRow::new(0, vec![1.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let rows = vec![s0, PiecewiseRow::constant(vec![0.0, 1.0]), PiecewiseRow::constant(vec![1.0, 0.0])];
        // q_{s0}(a1) = 2 on the first piece, q_{s0}(a0) = 1 afterwards.
        let batch = simulate(&m, &MarkovTimePolicy::Schedule(rows), SimConfig::new(20_000, 9)).unwrap();
        let p_first = 1.0 - (-2.0f64).exp();
        let frac_s2 = batch.trajectories.iter().filter(|t| t.sojourns.len() > 1 && t.sojourns[1].state == 2).count()
            as f64
            / 20_000.0;
        let se = (p_first * (1.0 - p_first) / 20_000.0).sqrt();
        assert!((frac_s2 - p_first).abs() < 4.0 * se);
    }

    #[test]
    fn rejects_bad_policies() {
        let m = catalog::m3();
        let bad = StationaryPolicy::deterministic(&[0, 0], 2);
        assert!(matches!(simulate_stationary(&m, &bad, SimConfig::new(1, 0)), Err(SimError::Policy(_))));
        let named = MarkovTimePolicy::Named(crate::model::NamedRule::ActionEqualsElapsedTime);
        assert_eq!(simulate(&m, &named, SimConfig::new(1, 0)), Err(SimError::NamedRule));
        assert!(simulate_stationary(&m, &m3_lifted(), SimConfig::new(0, 0)).is_err());
    }

    #[test]
    fn deterministic_batches() {
        let m = catalog::m3();
        let a = simulate_stationary(&m, &m3_lifted(), SimConfig::new(300, 42)).unwrap();
        let b = simulate_stationary(&m, &m3_lifted(), SimConfig::new(300, 42)).unwrap();
        assert_eq!(a, b);
        let c = simulate_stationary(&m, &m3_lifted(), SimConfig::new(300, 43)).unwrap();
        assert_ne!(a.trajectories, c.trajectories);
    }

    /// Composite Simpson on `[0, 40]` of the density-weighted cost.
    fn ex1_quadrature() -> f64 {
        let f = |t: f64| (-t).exp() * (-(1.0 - (-t).exp())).exp();
        let (n, h) = (40_000, 40.0 / 40_000.0);
        let mut s = f(0.0) + f(40.0);
        for k in 1..n {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn ex1_matches_quadrature() {
        let oracle = ex1_quadrature();
        assert!((oracle - (1.0 - (-1.0f64).exp())).abs() < 1e-10);
        let r = run_ex1(Ex1Scenario { seed: 7, n_traj: 100_000 }).unwrap();
        assert!((r.ctmdp_cost_estimate - oracle).abs() <= 3.0 * r.ctmdp_cost_stderr);
        assert!((r.p_no_jump_estimate - (-1.0f64).exp()).abs() <= 3.0 * r.p_no_jump_stderr);
        assert_eq!(r.dtmdp_value, 1.0);
        assert!(r.gap_significant);
    }

    #[test]
    fn ex1_path_cost_is_min_of_draw_and_one() {
        for k in 0..1000 {
            let e: f64 = trajectory_rng(5, k).sample(Exp1);
            let (c, jumped) = ex1_path(5, k);
            assert!((c - e.min(1.0)).abs() < 1e-12);
            assert_eq!(jumped, e < 1.0);
        }
    }
}
