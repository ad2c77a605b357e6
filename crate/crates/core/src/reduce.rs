//! Embedded jump-chain reduction of a CTMDP to a DTMDP on `S ∪ {x_∞}`.
//!
//! The undiscounted kernel is `p(y|x,a) = q̃(y|x,a)/q_x(a)` with reduced costs
//! `c_i/q_x(a)`; a pair with `q_x(a) = 0` sends all mass to the cemetery
//! `x_∞`. The discounted kernel divides by `α + q_x(a)` instead, leaving mass
//! `α/(α + q_x(a))` for the cemetery. The cemetery row is self-absorbing and
//! free, so it carries no action.

use serde_json::{json, Value};
use thiserror::Error;

use crate::format::ext;
use crate::model::{safe_div, CtmdpModel};

#[derive(Debug, Error, PartialEq)]
pub enum ReduceError {
    #[error("discount rate must be positive and finite, got {0}")]
    BadAlpha(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtmdpModel {
    n_states: usize,
    n_actions: usize,
    /// `[x][a][y]` over `S`.
    kernel: Vec<f64>,
    /// `[x][a]` mass sent to the cemetery.
    cemetery: Vec<f64>,
    /// `[i][x][a]`, `+∞` allowed.
    reduced_costs: Vec<Vec<f64>>,
    forbidden: Vec<bool>,
    alpha: Option<f64>,
}

impl DtmdpModel {
    /// Number of states in `S`; the cemetery has index `n_states()`.
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn cemetery_index(&self) -> usize {
        self.n_states
    }

    pub fn n_costs(&self) -> usize {
        self.reduced_costs.len()
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// `p(y|x,a)` for `x ∈ S` and `y ∈ S ∪ {x_∞}`.
    pub fn p(&self, x: usize, a: usize, y: usize) -> f64 {
        if y == self.n_states {
            self.cemetery[x * self.n_actions + a]
        } else {
            self.kernel[(x * self.n_actions + a) * self.n_states + y]
        }
    }

    /// Kernel row over `S` only.
    pub fn row(&self, x: usize, a: usize) -> &[f64] {
        let off = (x * self.n_actions + a) * self.n_states;
        &self.kernel[off..off + self.n_states]
    }

    pub fn cemetery_mass(&self, x: usize, a: usize) -> f64 {
        self.cemetery[x * self.n_actions + a]
    }

    pub fn reduced_cost(&self, i: usize, x: usize, a: usize) -> f64 {
        self.reduced_costs[i][x * self.n_actions + a]
    }

    pub fn is_forbidden(&self, x: usize, a: usize) -> bool {
        self.forbidden[x * self.n_actions + a]
    }

    pub fn to_json(&self, m: &CtmdpModel) -> Value {
        const CEMETERY: &str = "x_inf";
        let key = |x: usize, a: usize| format!("{}/{}", m.states()[x], m.actions()[a]);
        let mut kernel = serde_json::Map::new();
        let mut costs = vec![serde_json::Map::new(); self.n_costs()];
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                let mut row: serde_json::Map<String, Value> = (0..self.n_states)
                    .filter(|&y| self.p(x, a, y) != 0.0)
                    .map(|y| (m.states()[y].clone(), json!(self.p(x, a, y))))
                    .collect();
                if self.cemetery_mass(x, a) != 0.0 {
                    row.insert(CEMETERY.into(), json!(self.cemetery_mass(x, a)));
                }
                kernel.insert(key(x, a), Value::Object(row));
                for (i, table) in costs.iter_mut().enumerate() {
                    table.insert(key(x, a), ext(self.reduced_cost(i, x, a)));
                }
            }
        }
        let forbidden: Vec<String> = forbidden_pairs(self).into_iter().map(|(x, a)| key(x, a)).collect();
        let mut states = m.states().to_vec();
        states.push(CEMETERY.into());
        json!({
            "states": states,
            "cemetery": CEMETERY,
            "alpha": self.alpha,
            "kernel": kernel,
            "reduced_costs": costs,
            "forbidden": forbidden,
        })
    }
}

fn build(m: &CtmdpModel, alpha: Option<f64>) -> DtmdpModel {
    let (ns, na) = (m.n_states(), m.n_actions());
    let shift = alpha.unwrap_or(0.0);
    let mut kernel = vec![0.0; ns * na * ns];
    let mut cemetery = vec![0.0; ns * na];
    let mut reduced_costs = vec![vec![0.0; ns * na]; m.n_costs()];
    let mut forbidden = vec![false; ns * na];
    for x in 0..ns {
        for a in 0..na {
            let xa = x * na + a;
            let q = m.total_rate(x, a);
            let den = shift + q;
            for y in 0..ns {
                if y != x {
                    kernel[xa * ns + y] = safe_div(m.rate(x, a, y), den);
                }
            }
            cemetery[xa] = match alpha {
                Some(al) => al / den,
                None if q == 0.0 => 1.0,
                None => 0.0,
            };
            for (i, table) in reduced_costs.iter_mut().enumerate() {
                table[xa] = safe_div(m.cost(i, x, a), den);
                forbidden[xa] |= table[xa].is_infinite();
            }
        }
    }
    DtmdpModel { n_states: ns, n_actions: na, kernel, cemetery, reduced_costs, forbidden, alpha }
}

/// The undiscounted jump chain `p = q̃/q` with costs `c_i/q`.
pub fn build_jump_chain(m: &CtmdpModel) -> DtmdpModel {
    build(m, None)
}

/// The discounted chain `p_α = q̃/(α + q)` with costs `c_i/(α + q)`.
pub fn build_discounted_chain(m: &CtmdpModel, alpha: f64) -> Result<DtmdpModel, ReduceError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(ReduceError::BadAlpha(alpha));
    }
    Ok(build(m, Some(alpha)))
}

/// Pairs with some infinite reduced cost.
pub fn forbidden_pairs(d: &DtmdpModel) -> Vec<(usize, usize)> {
    (0..d.n_states)
        .flat_map(|x| (0..d.n_actions).map(move |a| (x, a)))
        .filter(|&(x, a)| d.is_forbidden(x, a))
        .collect()
}
