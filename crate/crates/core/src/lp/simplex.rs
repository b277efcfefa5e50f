//! Dense two-phase tableau simplex.
//!
//! Problems are minimizations over variables with optional finite bounds.
//! Bounds are folded into the tableau by shifting (finite lower bound),
//! reflecting (only an upper bound) or splitting (free variable); a finite
//! upper bound on a shifted variable becomes an explicit `<=` row.
//!
//! Pricing uses Dantzig's rule. After `bland_threshold` consecutive pivots
//! without objective progress the solver switches to Bland's rule until the
//! objective moves again.
//!
//! A [`Simplex`] keeps its tableau after phase 1, so many objectives over the
//! same feasible region can be minimized one after another, each starting
//! from the previous optimal basis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// One constraint row `sum coeffs[k].1 * x[coeffs[k].0]  (sense)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `minimize objective . x` subject to rows and `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<LinearRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// A program with `n` nonnegative variables and a zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            num_vars: n,
            objective: vec![0.0; n],
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(LinearRow { coeffs, sense, rhs });
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - xj).max(xj - self.upper[j]);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective at `x`; `NaN` unless optimal.
    pub objective: f64,
    /// Lower bound on the optimum from the duals of the final basis,
    /// evaluated on the original rows and bounds. Unlike `objective` it
    /// stays valid when the tableau has drifted. `NaN` unless optimal.
    pub bound: f64,
    pub x: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("simplex iteration limit reached after {0} pivots")]
    IterationLimit(usize),
    #[error("objective has {got} coefficients, program has {expected} variables")]
    ObjectiveSize { expected: usize, got: usize },
    #[error("variable {0} has an empty bound interval")]
    EmptyBounds(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub max_pivots: usize,
    /// Stalled pivots before switching to Bland's rule; `None` means
    /// `5 * (rows + cols)`.
    pub bland_threshold: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            max_pivots: 1_000_000,
            bland_threshold: None,
        }
    }
}

/// How an original variable maps onto tableau columns:
/// `x = offset + sum sign * col`.
#[derive(Debug, Clone)]
struct ColumnMap {
    offset: f64,
    cols: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct Simplex {
    opts: SimplexOptions,
    vars: Vec<ColumnMap>,
    /// Tableau rows, each `width` long with the rhs in the last slot.
    tab: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
    blocked: Vec<bool>,
    infeasible: bool,
    pivots: usize,
    source: LinearProgram,
    /// Per source row: identity column and the factor taking its dual back
    /// to the unscaled row.
    duals: Vec<Option<(usize, f64)>>,
}

impl Simplex {
    /// Build the tableau and run phase 1.
    pub fn new(lp: &LinearProgram, opts: SimplexOptions) -> Result<Self, LpError> {
        let n = lp.num_vars;
        let mut vars = Vec::with_capacity(n);
        let mut ncols = 0usize;
        let mut bound_rows: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            let (lo, hi) = (lp.lower[j], lp.upper[j]);
            if lo > hi {
                return Err(LpError::EmptyBounds(j));
            }
            let map = if lo.is_finite() {
                let c = ncols;
                ncols += 1;
                if hi.is_finite() {
                    bound_rows.push((c, hi - lo));
                }
                ColumnMap { offset: lo, cols: vec![(c, 1.0)] }
            } else if hi.is_finite() {
                let c = ncols;
                ncols += 1;
                ColumnMap { offset: hi, cols: vec![(c, -1.0)] }
            } else {
                let c = ncols;
                ncols += 2;
                ColumnMap { offset: 0.0, cols: vec![(c, 1.0), (c + 1, -1.0)] }
            };
            vars.push(map);
        }
        let structural = ncols;

        // rows over structural columns, rhs made nonnegative
        let mut dense_rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
        let mut infeasible = false;
        let mut push_row = |mut coef: Vec<f64>, mut sense: Sense, mut rhs: f64| -> Option<(usize, f64)> {
            let scale = coef.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                let ok = match sense {
                    Sense::Le => rhs >= -opts.feasibility_tol,
                    Sense::Ge => rhs <= opts.feasibility_tol,
                    Sense::Eq => rhs.abs() <= opts.feasibility_tol,
                };
                if !ok {
                    infeasible = true;
                }
                return None;
            }
            for v in coef.iter_mut() {
                *v /= scale;
            }
            rhs /= scale;
            let mut factor = 1.0 / scale;
            if rhs < 0.0 {
                factor = -factor;
                for v in coef.iter_mut() {
                    *v = -*v;
                }
                rhs = -rhs;
                sense = match sense {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
            }
            dense_rows.push((coef, sense, rhs));
            Some((dense_rows.len() - 1, factor))
        };
        let mut links = Vec::with_capacity(lp.rows.len());
        for row in &lp.rows {
            let mut coef = vec![0.0; structural];
            let mut rhs = row.rhs;
            for &(j, a) in &row.coeffs {
                let m = &vars[j];
                rhs -= a * m.offset;
                for &(c, s) in &m.cols {
                    coef[c] += a * s;
                }
            }
            links.push(push_row(coef, row.sense, rhs));
        }
        for &(c, cap) in &bound_rows {
            let mut coef = vec![0.0; structural];
            coef[c] = 1.0;
            push_row(coef, Sense::Le, cap);
        }
        let mut identity = Vec::with_capacity(dense_rows.len());

        let m = dense_rows.len();
        let slacks = dense_rows.iter().filter(|r| r.1 != Sense::Eq).count();
        let artificials = dense_rows.iter().filter(|r| r.1 != Sense::Le).count();
        let cols = structural + slacks + artificials;
        let width = cols + 1;
        let mut tab = vec![0.0; m * width];
        let mut basis = vec![0usize; m];
        let blocked = vec![false; cols];
        let mut next_slack = structural;
        let mut next_art = structural + slacks;
        let mut art_cols = Vec::new();
        for (i, (coef, sense, rhs)) in dense_rows.into_iter().enumerate() {
            let row = &mut tab[i * width..(i + 1) * width];
            row[..structural].copy_from_slice(&coef);
            row[cols] = rhs;
            identity.push(if sense == Sense::Le { next_slack } else { next_art });
            match sense {
                Sense::Le => {
                    row[next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Sense::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis[i] = next_art;
                    art_cols.push(next_art);
                    next_art += 1;
                }
                Sense::Eq => {
                    row[next_art] = 1.0;
                    basis[i] = next_art;
                    art_cols.push(next_art);
                    next_art += 1;
                }
            }
        }

        let duals = links.into_iter().map(|l| l.map(|(i, f)| (identity[i], f))).collect();
        let mut s = Simplex {
            opts,
            vars,
            tab,
            rows: m,
            cols,
            basis,
            blocked,
            infeasible,
            pivots: 0,
            source: lp.clone(),
            duals,
        };
        if s.infeasible {
            return Ok(s);
        }
        if !art_cols.is_empty() {
            let mut cost = vec![0.0; cols];
            for &a in &art_cols {
                cost[a] = 1.0;
            }
            match s.optimize(&cost)?.0 {
                Phase::Optimal(value) => {
                    if value > opts.feasibility_tol {
                        s.infeasible = true;
                        return Ok(s);
                    }
                }
                Phase::Unbounded => unreachable!("phase 1 objective is bounded below by zero"),
            }
            s.drop_artificials(structural + slacks);
        }
        Ok(s)
    }

    pub fn is_infeasible(&self) -> bool {
        self.infeasible
    }

    pub fn pivots(&self) -> usize {
        self.pivots
    }

    fn width(&self) -> usize {
        self.cols + 1
    }

    fn rhs(&self, i: usize) -> f64 {
        self.tab[i * self.width() + self.cols]
    }

    fn drop_artificials(&mut self, first_art: usize) {
        let width = self.width();
        for c in first_art..self.cols {
            self.blocked[c] = true;
        }
        let mut i = 0;
        while i < self.rows {
            if self.basis[i] >= first_art {
                let row = &self.tab[i * width..(i + 1) * width];
                let pick = (0..first_art)
                    .filter(|&j| row[j].abs() > self.opts.pivot_tol)
                    .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()));
                match pick {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        // redundant row
                        self.tab.drain(i * width..(i + 1) * width);
                        self.basis.remove(i);
                        self.rows -= 1;
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.width();
        let p = self.tab[r * width + c];
        {
            let row = &mut self.tab[r * width..(r + 1) * width];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[c] = 1.0;
        }
        let (before, rest) = self.tab.split_at_mut(r * width);
        let (prow, after) = rest.split_at_mut(width);
        for other in before.chunks_exact_mut(width).chain(after.chunks_exact_mut(width)) {
            let f = other[c];
            if f != 0.0 {
                for (o, &pv) in other.iter_mut().zip(prow.iter()) {
                    *o -= f * pv;
                }
                other[c] = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Primal simplex from the current (feasible) basis on column costs.
    /// Also returns the final reduced costs.
    fn optimize(&mut self, cost: &[f64]) -> Result<(Phase, Vec<f64>), LpError> {
        let width = self.width();
        let cols = self.cols;
        // reduced costs d_j = c_j - c_B^T T_j ; last slot holds -z
        let mut d = vec![0.0; width];
        d[..cols].copy_from_slice(cost);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.tab[i * width..(i + 1) * width];
                for (dj, &t) in d.iter_mut().zip(row) {
                    *dj -= cb * t;
                }
            }
        }
        let threshold = self.opts.bland_threshold.unwrap_or(5 * (self.rows + cols)).max(1);
        let mut stalled = 0usize;
        let mut bland = false;
        let mut last_obj = -d[cols];
        loop {
            if self.pivots >= self.opts.max_pivots {
                return Err(LpError::IterationLimit(self.pivots));
            }
            let tol = self.opts.optimality_tol;
            let entering = if bland {
                (0..cols).find(|&j| !self.blocked[j] && d[j] < -tol)
            } else {
                let mut best = None;
                let mut best_val = -tol;
                for j in 0..cols {
                    if !self.blocked[j] && d[j] < best_val {
                        best_val = d[j];
                        best = Some(j);
                    }
                }
                best
            };
            let Some(c) = entering else {
                return Ok((Phase::Optimal(-d[cols]), d));
            };

            let mut leave: Option<(usize, f64, f64)> = None;
            for i in 0..self.rows {
                let a = self.tab[i * width + c];
                if a > self.opts.pivot_tol {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio, a)),
                        Some((bi, br, ba)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            let better = if tie {
                                if bland {
                                    self.basis[i] < self.basis[bi]
                                } else {
                                    a > ba
                                }
                            } else {
                                ratio < br
                            };
                            if better {
                                Some((i, ratio, a))
                            } else {
                                Some((bi, br, ba))
                            }
                        }
                    };
                }
            }
            let Some((r, _, _)) = leave else {
                return Ok((Phase::Unbounded, d));
            };

            self.pivot(r, c);
            let prow = &self.tab[r * width..(r + 1) * width];
            let f = d[c];
            for (dj, &pv) in d.iter_mut().zip(prow) {
                *dj -= f * pv;
            }
            d[c] = 0.0;

            let obj = -d[cols];
            if obj < last_obj - 1e-12 * (1.0 + last_obj.abs()) {
                stalled = 0;
                bland = false;
                last_obj = obj;
            } else {
                stalled += 1;
                if stalled >= threshold {
                    bland = true;
                }
            }
        }
    }

    fn column_values(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.cols];
        for (i, &b) in self.basis.iter().enumerate() {
            v[b] = self.rhs(i).max(0.0);
        }
        v
    }

    /// Minimize `objective . x` starting from the current basis.
    pub fn minimize(&mut self, objective: &[f64]) -> Result<LpSolution, LpError> {
        if objective.len() != self.vars.len() {
            return Err(LpError::ObjectiveSize { expected: self.vars.len(), got: objective.len() });
        }
        let start = self.pivots;
        if self.infeasible {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                bound: f64::NAN,
                x: Vec::new(),
                pivots: 0,
            });
        }
        let mut cost = vec![0.0; self.cols];
        for (m, &cj) in self.vars.iter().zip(objective) {
            for &(c, s) in &m.cols {
                cost[c] += cj * s;
            }
        }
        let (phase, d) = self.optimize(&cost)?;
        let colv = self.column_values();
        let x: Vec<f64> = self
            .vars
            .iter()
            .map(|m| m.offset + m.cols.iter().map(|&(c, s)| s * colv[c]).sum::<f64>())
            .collect();
        let pivots = self.pivots - start;
        Ok(match phase {
            Phase::Optimal(_) => {
                let bound = self.dual_bound(objective, &d);
                let objective = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                LpSolution { status: LpStatus::Optimal, objective, bound, x, pivots }
            }
            Phase::Unbounded => {
                LpSolution { status: LpStatus::Unbounded, objective: f64::NAN, bound: f64::NAN, x, pivots }
            }
        })
    }

    /// `min_x c.x + y.(b - A x)` over the variable bounds, for the duals `y`
    /// read off the reduced costs and clipped to the right sign. Any such
    /// `y` gives a lower bound, so tableau error only loosens it.
    fn dual_bound(&self, objective: &[f64], d: &[f64]) -> f64 {
        let lp = &self.source;
        let mut r = objective.to_vec();
        let mut total = 0.0;
        for (row, link) in lp.rows.iter().zip(&self.duals) {
            let Some((col, f)) = *link else { continue };
            let y = -d[col] * f;
            let y = match row.sense {
                Sense::Le => y.min(0.0),
                Sense::Ge => y.max(0.0),
                Sense::Eq => y,
            };
            if y == 0.0 {
                continue;
            }
            total += y * row.rhs;
            for &(j, a) in &row.coeffs {
                r[j] -= y * a;
            }
        }
        for j in 0..lp.num_vars {
            let x = if r[j] > 0.0 {
                lp.lower[j]
            } else if r[j] < 0.0 {
                lp.upper[j]
            } else {
                continue;
            };
            if !x.is_finite() {
                return f64::NEG_INFINITY;
            }
            total += r[j] * x;
        }
        total
    }
}

enum Phase {
    Optimal(f64),
    Unbounded,
}

/// Solve a single program from scratch.
pub fn solve(lp: &LinearProgram, opts: SimplexOptions) -> Result<LpSolution, LpError> {
    Simplex::new(lp, opts)?.minimize(&lp.objective)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SimplexOptions {
        SimplexOptions::default()
    }

    #[test]
    fn bounded_single_variable() {
        // min x s.t. x >= 1, x <= 2
        let mut lp = LinearProgram::new(1);
        lp.lower[0] = f64::NEG_INFINITY;
        lp.objective = vec![1.0];
        lp.add_row(vec![(0, 1.0)], Sense::Ge, 1.0);
        lp.add_row(vec![(0, 1.0)], Sense::Le, 2.0);
        let s = solve(&lp, opts()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_corner() {
        // min -x - y s.t. x + y <= 1, x, y >= 0
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.0);
        let s = solve(&lp, opts()).unwrap();
        assert!((s.objective + 1.0).abs() < 1e-12);
        assert!(s.x.iter().any(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.add_row(vec![(0, 1.0)], Sense::Ge, 3.0);
        lp.add_row(vec![(0, 1.0)], Sense::Le, 2.0);
        assert_eq!(solve(&lp, opts()).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(1);
        lp.objective = vec![-1.0];
        assert_eq!(solve(&lp, opts()).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_upper_only_variables() {
        // min x - y, x free in [-inf, inf] with x >= -3 row, y <= 4 upper only
        let mut lp = LinearProgram::new(2);
        lp.lower = vec![f64::NEG_INFINITY, f64::NEG_INFINITY];
        lp.upper = vec![f64::INFINITY, 4.0];
        lp.objective = vec![1.0, -1.0];
        lp.add_row(vec![(0, 1.0)], Sense::Ge, -3.0);
        let s = solve(&lp, opts()).unwrap();
        assert!((s.objective + 7.0).abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn equality_rows_and_redundancy() {
        // x + y = 2, 2x + 2y = 4 (redundant), min x  with x,y in [0, 5]
        let mut lp = LinearProgram::new(2);
        lp.upper = vec![5.0, 5.0];
        lp.objective = vec![1.0, 0.0];
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 2.0);
        lp.add_row(vec![(0, 2.0), (1, 2.0)], Sense::Eq, 4.0);
        let s = solve(&lp, opts()).unwrap();
        assert!(s.objective.abs() < 1e-12);
        assert!(lp.max_violation(&s.x) < 1e-9);
    }

    #[test]
    fn warm_start_multiple_objectives() {
        // unit square, minimize along several directions
        let mut lp = LinearProgram::new(2);
        lp.upper = vec![1.0, 1.0];
        lp.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.5);
        let mut s = Simplex::new(&lp, opts()).unwrap();
        let a = s.minimize(&[-1.0, -1.0]).unwrap();
        assert!((a.objective + 1.5).abs() < 1e-12);
        let b = s.minimize(&[1.0, 0.0]).unwrap();
        assert!(b.objective.abs() < 1e-12);
        let c = s.minimize(&[-1.0, 0.0]).unwrap();
        assert!((c.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's classic cycling LP; optimum -1/20 at x = (1/25, 0, 1, 0)
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![-0.75, 150.0, -0.02, 6.0];
        lp.add_row(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Sense::Le, 0.0);
        lp.add_row(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Sense::Le, 0.0);
        lp.add_row(vec![(2, 1.0)], Sense::Le, 1.0);
        let s = solve(&lp, SimplexOptions { bland_threshold: Some(1), ..opts() }).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 0.05).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn iteration_limit_surfaces() {
        let mut lp = LinearProgram::new(3);
        lp.objective = vec![-1.0, -1.0, -1.0];
        lp.upper = vec![1.0, 1.0, 1.0];
        let err = solve(&lp, SimplexOptions { max_pivots: 1, ..opts() }).unwrap_err();
        assert!(matches!(err, LpError::IterationLimit(_)));
    }
}
