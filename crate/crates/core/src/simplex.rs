//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `min c·x  s.t.  A_eq x = b_eq,  A_le x ≤ b_le,  x ≥ 0`. Pivoting is
//! deterministic: the entering column is the lowest index with a negative
//! reduced cost and ties in the ratio test go to the lowest basic index.

use thiserror::Error;

/// Entries at or below this magnitude are never pivoted on.
pub const PIVOT_TOL: f64 = 1e-10;
/// Reduced costs above `-OPT_TOL` count as nonnegative.
pub const OPT_TOL: f64 = 1e-10;
pub const MAX_PIVOTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let lhs: f64 = r.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
                match r.kind {
                    RowKind::Eq => (lhs - r.rhs).abs(),
                    RowKind::Le => (lhs - r.rhs).max(0.0),
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic column per surviving row; columns past `n_vars` are slacks.
    pub basis: Vec<usize>,
    /// Final reduced costs of the structural and slack columns.
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// Phase one ended with this much artificial mass.
    Infeasible { residual: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum SimplexError {
    #[error("objective unbounded below (entering column {column})")]
    Unbounded { column: usize },
    #[error("pivot cap of {cap} exceeded (phase {phase}, objective {objective})")]
    PivotCap { cap: usize, phase: u8, objective: f64 },
    #[error("malformed program: {0}")]
    Malformed(String),
}

struct Tableau {
    /// `m` constraint rows followed by the reduced-cost row; last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
    /// Columns allowed to enter.
    eligible: Vec<bool>,
    pivots: usize,
}

impl Tableau {
    fn m(&self) -> usize {
        self.basis.len()
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.width]
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let m = self.m();
        let mut row = cost.to_vec();
        row.push(0.0);
        for i in 0..m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (r, v) in row.iter_mut().zip(&self.t[i]) {
                    *r -= cb * v;
                }
            }
        }
        self.t[m] = row;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        self.t[r][c] = 1.0;
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        for i in 0..self.basis.len() {
            let v = &mut self.t[i][self.width];
            if *v < 0.0 && *v > -1e-9 {
                *v = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn run(&mut self, phase: u8) -> Result<(), SimplexError> {
        let m = self.m();
        loop {
            let entering = (0..self.width).find(|&j| self.eligible[j] && self.t[m][j] < -OPT_TOL);
            let Some(c) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][c];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let eps = 1e-12 * (1.0 + br.abs());
                        if ratio < br - eps || (ratio <= br + eps && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Err(SimplexError::Unbounded { column: c });
            };
            if self.pivots >= MAX_PIVOTS {
                return Err(SimplexError::PivotCap { cap: MAX_PIVOTS, phase, objective: -self.t[m][self.width] });
            }
            self.pivot(r, c);
        }
    }
}

/// Solves the program. An unbounded objective is reported as an error.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome, SimplexError> {
    let n = lp.n_vars();
    for (k, r) in lp.rows.iter().enumerate() {
        if r.coeffs.len() != n || !r.rhs.is_finite() || r.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(SimplexError::Malformed(format!("row {k}")));
        }
    }
    if lp.objective.iter().any(|v| !v.is_finite()) {
        return Err(SimplexError::Malformed("objective".into()));
    }
    let m = lp.rows.len();
    let n_slack = lp.rows.iter().filter(|r| r.kind == RowKind::Le).count();
    let needs_art: Vec<bool> = lp.rows.iter().map(|r| r.kind == RowKind::Eq || r.rhs < 0.0).collect();
    let n_art = needs_art.iter().filter(|&&b| b).count();
    let width = n + n_slack + n_art;

    let mut t = vec![vec![0.0; width + 1]; m + 1];
    let mut basis = vec![0; m];
    let (mut s, mut art) = (n, n + n_slack);
    let mut rhs_norm = 0.0;
    for (i, r) in lp.rows.iter().enumerate() {
        let sign = if r.rhs < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * r.coeffs[j];
        }
        t[i][width] = sign * r.rhs;
        rhs_norm += r.rhs.abs();
        if r.kind == RowKind::Le {
            t[i][s] = sign;
            if !needs_art[i] {
                basis[i] = s;
            }
            s += 1;
        }
        if needs_art[i] {
            t[i][art] = 1.0;
            basis[i] = art;
            art += 1;
        }
    }
    let mut tab = Tableau { t, basis, width, eligible: vec![true; width], pivots: 0 };

    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        for c in phase1.iter_mut().skip(n + n_slack) {
            *c = 1.0;
        }
        tab.set_costs(&phase1);
        tab.run(1)?;
        let residual = -tab.t[m][width];
        if residual > 1e-9 * (1.0 + rhs_norm) {
            return Ok(LpOutcome::Infeasible { residual });
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.m() {
            if tab.basis[i] >= n + n_slack {
                match (0..n + n_slack).find(|&j| tab.t[i][j].abs() > PIVOT_TOL) {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.t.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
        for e in tab.eligible.iter_mut().skip(n + n_slack) {
            *e = false;
        }
    }

    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(&lp.objective);
    tab.set_costs(&cost);
    tab.run(2)?;

    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs(i).max(0.0);
        }
    }
    let last = tab.m();
    Ok(LpOutcome::Optimal(LpSolution {
        objective: lp.objective_at(&x),
        reduced_costs: tab.t[last][..n + n_slack].to_vec(),
        basis: tab.basis.clone(),
        pivots: tab.pivots,
        x,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coeffs: &[f64], kind: RowKind, rhs: f64) -> Row {
        Row { coeffs: coeffs.to_vec(), kind, rhs }
    }

    fn optimal(lp: &LinearProgram) -> LpSolution {
        match solve(lp).unwrap() {
            LpOutcome::Optimal(s) => s,
            o => panic!("expected optimum, got {o:?}"),
        }
    }

    #[test]
    fn small_mixed_program() {
        // min x + 2y s.t. x + y = 1, x <= 0.3
        let lp = LinearProgram {
            objective: vec![1.0, 2.0],
            rows: vec![row(&[1.0, 1.0], RowKind::Eq, 1.0), row(&[1.0, 0.0], RowKind::Le, 0.3)],
        };
        let s = optimal(&lp);
        assert!((s.objective - 1.7).abs() < 1e-12);
        assert!((s.x[0] - 0.3).abs() < 1e-12);
        assert!(s.reduced_costs.iter().all(|&d| d >= -OPT_TOL));
    }

    #[test]
    fn negative_rhs_le_row() {
        // min x s.t. -x <= -2  (x >= 2)
        let lp = LinearProgram { objective: vec![1.0], rows: vec![row(&[-1.0], RowKind::Le, -2.0)] };
        let s = optimal(&lp);
        assert!((s.x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let lp = LinearProgram {
            objective: vec![1.0],
            rows: vec![row(&[1.0], RowKind::Eq, 1.0), row(&[1.0], RowKind::Le, 0.5)],
        };
        assert!(matches!(solve(&lp).unwrap(), LpOutcome::Infeasible { .. }));
    }

    #[test]
    fn redundant_equalities() {
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            rows: vec![row(&[1.0, 1.0], RowKind::Eq, 1.0), row(&[2.0, 2.0], RowKind::Eq, 2.0)],
        };
        let s = optimal(&lp);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert_eq!(s.basis.len(), 1);
    }

    #[test]
    fn unbounded_reported() {
        let lp = LinearProgram { objective: vec![-1.0], rows: vec![] };
        assert_eq!(solve(&lp), Err(SimplexError::Unbounded { column: 0 }));
    }

    #[test]
    fn empty_program() {
        let lp = LinearProgram { objective: vec![], rows: vec![row(&[], RowKind::Le, 0.4)] };
        let s = optimal(&lp);
        assert_eq!(s.objective, 0.0);
        let lp = LinearProgram { objective: vec![], rows: vec![row(&[], RowKind::Le, -1.0)] };
        assert!(matches!(solve(&lp).unwrap(), LpOutcome::Infeasible { .. }));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, cycles under the textbook largest-coefficient rule.
        let lp = LinearProgram {
            objective: vec![-0.75, 150.0, -0.02, 6.0],
            rows: vec![
                row(&[0.25, -60.0, -0.04, 9.0], RowKind::Le, 0.0),
                row(&[0.5, -90.0, -0.02, 3.0], RowKind::Le, 0.0),
                row(&[0.0, 0.0, 1.0, 0.0], RowKind::Le, 1.0),
            ],
        };
        let s = optimal(&lp);
        assert!((s.objective + 0.05).abs() < 1e-12, "{}", s.objective);
    }
}
