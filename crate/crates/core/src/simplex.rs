//! Dense simplex for box-bounded linear programs
//!
//! ```text
//! maximize cᵀx  subject to  A x ≤ b,  l ≤ x ≤ u   (l, u finite)
//! ```
//!
//! The solver works on a compact tableau holding only the nonbasic columns,
//! starting from the all-slack basis. Because every structural variable is
//! boxed, placing each one at the bound favoured by its cost makes that basis
//! dual feasible, so the first phase is a dual simplex that restores primal
//! feasibility (or proves infeasibility) without artificial variables. Costs
//! are perturbed by a tiny deterministic amount during that phase to avoid
//! dual degeneracy. The second phase reinstates the true costs and runs the
//! bounded-variable primal simplex to optimality.
//!
//! Primal pricing is Dantzig's largest reduced cost. After a run of degenerate
//! pivots it switches to Bland's smallest-index rule for both the entering and
//! the leaving variable, which rules out cycling, and returns to Dantzig
//! pricing once the objective moves again.

use log::{debug, warn};
use thiserror::Error;

use crate::seeding::derive_seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("problem is infeasible (row {row} short by {residual:e})")]
    Infeasible { row: usize, residual: f64 },
    #[error("problem is unbounded along variable {var}")]
    Unbounded { var: usize },
    #[error("iteration limit of {limit} pivots reached")]
    IterationLimit { limit: usize },
    #[error("malformed problem: {0}")]
    Malformed(String),
}

/// `maximize cᵀx s.t. A x ≤ b, lower ≤ x ≤ upper` with a dense row-major `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLp {
    pub objective: Vec<f64>,
    /// Row-major `rows × objective.len()` constraint matrix.
    pub a: Vec<f64>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxLp {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    fn validate(&self) -> Result<(), LpError> {
        let d = self.num_vars();
        let m = self.num_rows();
        if self.a.len() != m * d {
            return Err(LpError::Malformed(format!("matrix has {} entries, expected {}x{}", self.a.len(), m, d)));
        }
        if self.lower.len() != d || self.upper.len() != d {
            return Err(LpError::Malformed("bound vectors must match the number of variables".into()));
        }
        for j in 0..d {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(LpError::Malformed(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        if self.a.iter().chain(&self.rhs).chain(&self.objective).any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("non-finite coefficient".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
    /// Pivots plus bound flips over both phases.
    pub iterations: usize,
}

/// Numerical settings of the simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Primal feasibility and reduced-cost tolerance.
    pub feas_tol: f64,
    /// Smallest tableau entry accepted as a pivot.
    pub pivot_tol: f64,
    /// Relative size of the cost perturbation used by the dual phase.
    pub perturbation: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_streak: usize,
    /// Multiplier `k` in the limit `k·(rows + cols)` on iterations.
    pub iteration_factor: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feas_tol: 1e-9,
            pivot_tol: 1e-9,
            perturbation: 1e-7,
            degenerate_streak: 50,
            iteration_factor: 50,
        }
    }
}

/// Solve with default options.
pub fn solve_box_lp(lp: &BoxLp) -> Result<LpSolution, LpError> {
    solve_box_lp_with(lp, &SimplexOptions::default())
}

pub fn solve_box_lp_with(lp: &BoxLp, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let d = lp.num_vars();
    let limit = opts.iteration_factor * (lp.num_rows() + d).max(1);

    let mut costs = vec![0.0; d + lp.num_rows()];
    for (j, (cost, &c)) in costs.iter_mut().zip(&lp.objective).enumerate() {
        let u = (derive_seed(0x51_4d_50_4c, &[j as u64]) >> 11) as f64 / (1u64 << 53) as f64;
        let sign = if c > 0.0 || (c == 0.0 && u < 0.5) { 1.0 } else { -1.0 };
        *cost = c + sign * opts.perturbation * (1.0 + c.abs()) * (0.5 + 0.5 * u);
    }
    let mut t = Tableau::build(lp, &costs);
    let mut iterations = t.dual_phase(opts, limit)?;

    costs[..d].copy_from_slice(&lp.objective);
    t.set_costs(&costs);
    iterations += t.primal_phase(opts, limit.saturating_sub(iterations))?;

    let x: Vec<f64> = (0..d).map(|j| t.value[j].clamp(lp.lower[j], lp.upper[j])).collect();
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    check_residuals(lp, &x, opts.feas_tol);
    debug!("simplex: {iterations} iterations, objective {objective:e}");
    Ok(LpSolution { objective, x, iterations })
}

fn check_residuals(lp: &BoxLp, x: &[f64], tol: f64) {
    let d = lp.num_vars();
    if d == 0 {
        return;
    }
    for (i, row) in lp.a.chunks(d).enumerate() {
        let act: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
        let scale = 1.0 + row.iter().map(|v| v.abs()).sum::<f64>();
        if act - lp.rhs[i] > 1e3 * tol * scale {
            warn!("simplex: row {i} violated by {:e} after solve", act - lp.rhs[i]);
        }
    }
}

/// Compact tableau: `x_B(i) + Σ_k t[i][k]·x_N(k)` is constant along any move.
struct Tableau {
    m: usize,
    /// Number of nonbasic columns (= structural variables).
    d: usize,
    t: Vec<f64>,
    /// Reduced cost of each nonbasic column.
    reduced: Vec<f64>,
    basis: Vec<usize>,
    nonbasic: Vec<usize>,
    /// Variable indices: structurals `0..d`, slacks `d..d+m`.
    value: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    costs: Vec<f64>,
    /// Devex reference weights of the tableau rows, used to pick the leaving row.
    row_weight: Vec<f64>,
}

impl Tableau {
    fn build(lp: &BoxLp, costs: &[f64]) -> Tableau {
        let d = lp.num_vars();
        let m = lp.num_rows();
        let mut value = vec![0.0; d + m];
        for j in 0..d {
            value[j] = if costs[j] > 0.0 { lp.upper[j] } else { lp.lower[j] };
        }
        for i in 0..m {
            let act: f64 = lp.a[i * d..(i + 1) * d].iter().zip(&value[..d]).map(|(a, v)| a * v).sum();
            value[d + i] = lp.rhs[i] - act;
        }
        let mut lower = vec![0.0; d + m];
        let mut upper = vec![f64::INFINITY; d + m];
        lower[..d].copy_from_slice(&lp.lower);
        upper[..d].copy_from_slice(&lp.upper);
        let mut tab = Tableau {
            m,
            d,
            t: lp.a.clone(),
            reduced: vec![0.0; d],
            basis: (d..d + m).collect(),
            nonbasic: (0..d).collect(),
            value,
            lower,
            upper,
            costs: vec![0.0; d + m],
            row_weight: vec![1.0; m],
        };
        tab.set_costs(costs);
        tab
    }

    fn set_costs(&mut self, costs: &[f64]) {
        self.costs.copy_from_slice(costs);
        for k in 0..self.d {
            self.reduced[k] = self.costs[self.nonbasic[k]];
        }
        for i in 0..self.m {
            let cb = self.costs[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.d..(i + 1) * self.d];
                for (r, v) in self.reduced.iter_mut().zip(row) {
                    *r -= cb * v;
                }
            }
        }
    }

    fn objective(&self) -> f64 {
        self.costs.iter().zip(&self.value).map(|(c, v)| c * v).sum()
    }

    fn at_lower(&self, var: usize) -> bool {
        self.value[var] <= self.lower[var]
    }

    fn at_upper(&self, var: usize) -> bool {
        self.value[var] >= self.upper[var]
    }

    /// Dual simplex: drive basic variables into their bounds.
    fn dual_phase(&mut self, opts: &SimplexOptions, limit: usize) -> Result<usize, LpError> {
        let mut iters = 0;
        loop {
            let mut leave = None;
            let worst = opts.feas_tol;
            let mut best = 0.0;
            for i in 0..self.m {
                let k = self.basis[i];
                let below = self.lower[k] - self.value[k];
                let above = self.value[k] - self.upper[k];
                let (gap, target) = if below > above { (below, self.lower[k]) } else { (above, self.upper[k]) };
                if gap > worst * (1.0 + target.abs()) {
                    let score = gap * gap / self.row_weight[i];
                    if score > best {
                        best = score;
                        leave = Some((i, target));
                    }
                }
            }
            let Some((r, target)) = leave else {
                return Ok(iters);
            };
            if iters >= limit {
                return Err(LpError::IterationLimit { limit });
            }
            iters += 1;

            let k = self.basis[r];
            let up = target > self.value[k];
            let row = &self.t[r * self.d..(r + 1) * self.d];
            // candidates (ratio |d_q|/|α_q|, column, α_q); raising x_N(q) moves
            // the leaving variable the wanted way iff α_q > 0
            let mut cands: Vec<(f64, usize, f64)> = Vec::new();
            for (q, (&var, &entry)) in self.nonbasic.iter().zip(row).enumerate() {
                if self.lower[var] == self.upper[var] {
                    continue;
                }
                let alpha = if up { -entry } else { entry };
                let ok = (alpha > opts.pivot_tol && !self.at_upper(var))
                    || (alpha < -opts.pivot_tol && !self.at_lower(var));
                if ok {
                    cands.push((self.reduced[q].abs() / alpha.abs(), q, alpha));
                }
            }
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.2.abs().total_cmp(&a.2.abs())).then(a.1.cmp(&b.1)));

            // long-step ratio test: flip boxed columns while the leaving
            // variable stays infeasible, the first one that would overshoot enters
            let mut slope = (target - self.value[k]).abs();
            let mut first_enter = None;
            for (pos, &(_, q, alpha)) in cands.iter().enumerate() {
                let var = self.nonbasic[q];
                let range = self.upper[var] - self.lower[var];
                let rest = slope - alpha.abs() * range;
                if range.is_finite() && rest > opts.feas_tol {
                    slope = rest;
                } else {
                    first_enter = Some(pos);
                    break;
                }
            }
            let Some(first) = first_enter else {
                if slope > opts.feas_tol * (1.0 + target.abs()) {
                    return Err(LpError::Infeasible { row: k.saturating_sub(self.d), residual: slope });
                }
                let all: Vec<usize> = cands.iter().map(|c| c.1).collect();
                let moves = self.flip_moves(&all);
                self.shift_many(&moves);
                continue;
            };
            // prefer a larger pivot among near-tied breakpoints
            let bound = cands[first..]
                .iter()
                .map(|&(_, q, alpha)| (self.reduced[q].abs() + opts.feas_tol) / alpha.abs())
                .fold(f64::INFINITY, f64::min);
            let mut pick = first;
            for (pos, &(ratio, _, alpha)) in cands.iter().enumerate().skip(first) {
                if ratio > bound {
                    break;
                }
                if alpha.abs() > cands[pick].2.abs() {
                    pick = pos;
                }
            }
            let flips: Vec<usize> = cands[..first].iter().map(|c| c.1).collect();
            let q = cands[pick].1;
            if !flips.is_empty() {
                let moves = self.flip_moves(&flips);
                self.shift_many(&moves);
            }
            let delta = (self.value[k] - target) / self.t[r * self.d + q];
            self.shift(q, delta);
            self.value[k] = target;
            self.pivot(r, q);
        }
    }

    /// Move nonbasic column `q` by `delta`, updating the basic values.
    fn shift(&mut self, q: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        for i in 0..self.m {
            let a = self.t[i * self.d + q];
            if a != 0.0 {
                self.value[self.basis[i]] -= a * delta;
            }
        }
        self.value[self.nonbasic[q]] += delta;
    }

    /// Moves taking each listed nonbasic column to its opposite bound.
    fn flip_moves(&self, columns: &[usize]) -> Vec<(usize, f64)> {
        columns
            .iter()
            .map(|&q| {
                let var = self.nonbasic[q];
                let other = if self.at_lower(var) { self.upper[var] } else { self.lower[var] };
                (q, other - self.value[var])
            })
            .collect()
    }

    /// Move several nonbasic columns to new values in one row-wise pass.
    fn shift_many(&mut self, moves: &[(usize, f64)]) {
        for i in 0..self.m {
            let row = &self.t[i * self.d..(i + 1) * self.d];
            let change: f64 = moves.iter().map(|&(q, delta)| row[q] * delta).sum();
            self.value[self.basis[i]] -= change;
        }
        for &(q, delta) in moves {
            let var = self.nonbasic[q];
            self.value[var] = if delta > 0.0 { self.upper[var] } else { self.lower[var] };
        }
    }

    /// Entering column and direction (+1 increase, −1 decrease).
    fn price(&self, bland: bool, tol: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        let mut best_var = usize::MAX;
        for q in 0..self.d {
            let var = self.nonbasic[q];
            let dq = self.reduced[q];
            let dir = if dq > tol && self.value[var] < self.upper[var] {
                1.0
            } else if dq < -tol && self.value[var] > self.lower[var] {
                -1.0
            } else {
                continue;
            };
            let better = if bland { var < best_var } else { dq.abs() > best_score };
            if better {
                best_score = dq.abs();
                best_var = var;
                best = Some((q, dir));
            }
        }
        best
    }

    fn primal_phase(&mut self, opts: &SimplexOptions, limit: usize) -> Result<usize, LpError> {
        let mut iters = 0;
        let mut degenerate_run = 0;
        let mut bland = false;
        loop {
            let Some((q, dir)) = self.price(bland, opts.feas_tol) else {
                debug!("simplex: primal optimum after {iters} iterations (objective {:e})", self.objective());
                return Ok(iters);
            };
            if iters >= limit {
                return Err(LpError::IterationLimit { limit });
            }
            iters += 1;

            let var = self.nonbasic[q];
            let own = if dir > 0.0 { self.upper[var] - self.value[var] } else { self.value[var] - self.lower[var] };
            let mut step = own;
            let mut leave: Option<(usize, f64)> = None;
            let mut leave_alpha = 0.0f64;
            for i in 0..self.m {
                let alpha = dir * self.t[i * self.d + q];
                let k = self.basis[i];
                let room = if alpha > opts.pivot_tol {
                    (self.value[k] - self.lower[k]).max(0.0) / alpha
                } else if alpha < -opts.pivot_tol && self.upper[k].is_finite() {
                    (self.upper[k] - self.value[k]).max(0.0) / -alpha
                } else {
                    continue;
                };
                let slack = 1e-12 * (1.0 + step.abs());
                let better = if room < step - slack {
                    true
                } else if room <= step + slack {
                    match leave {
                        None => true,
                        Some((row, _)) => {
                            if bland {
                                k < self.basis[row]
                            } else {
                                alpha.abs() > leave_alpha
                            }
                        }
                    }
                } else {
                    false
                };
                if better {
                    step = step.min(room);
                    let bound = if alpha > 0.0 { self.lower[k] } else { self.upper[k] };
                    leave = Some((i, bound));
                    leave_alpha = alpha.abs();
                }
            }
            if !step.is_finite() {
                return Err(LpError::Unbounded { var });
            }

            self.shift(q, dir * step);
            if step > 1e-12 {
                degenerate_run = 0;
                bland = false;
            } else {
                degenerate_run += 1;
                if degenerate_run >= opts.degenerate_streak {
                    bland = true;
                }
            }
            match leave {
                None => {
                    self.value[var] = if dir > 0.0 { self.upper[var] } else { self.lower[var] };
                }
                Some((r, bound)) => {
                    self.value[self.basis[r]] = bound;
                    self.pivot(r, q);
                }
            }
        }
    }

    /// Exchange basic row `r` with nonbasic column `q`.
    fn pivot(&mut self, r: usize, q: usize) {
        let d = self.d;
        let piv = self.t[r * d + q];
        let inv = 1.0 / piv;
        {
            let row = &mut self.t[r * d..(r + 1) * d];
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[q] = inv;
        }
        let pivot_row = self.t[r * d..(r + 1) * d].to_vec();
        let nz: Vec<usize> = (0..d).filter(|&k| k != q && pivot_row[k] != 0.0).collect();
        let sparse = nz.len() * 4 < d;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * d + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * d..(i + 1) * d];
            if sparse {
                for &k in &nz {
                    row[k] -= f * pivot_row[k];
                }
            } else {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
            row[q] = -f * inv;
            let ratio = f * inv;
            self.row_weight[i] = self.row_weight[i].max(ratio * ratio * self.row_weight[r]);
        }
        self.row_weight[r] = (self.row_weight[r] * inv * inv).max(1.0);
        let f = self.reduced[q];
        if f != 0.0 {
            for &k in &nz {
                self.reduced[k] -= f * pivot_row[k];
            }
        }
        self.reduced[q] = -f * inv;
        std::mem::swap(&mut self.basis[r], &mut self.nonbasic[q]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(objective: &[f64], rows: &[&[f64]], rhs: &[f64], lower: &[f64], upper: &[f64]) -> BoxLp {
        BoxLp {
            objective: objective.to_vec(),
            a: rows.iter().flat_map(|r| r.iter().copied()).collect(),
            rhs: rhs.to_vec(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        }
    }

    #[test]
    fn one_variable() {
        let sol = solve_box_lp(&lp(&[1.0], &[&[1.0]], &[1.0], &[-1.0], &[1.0])).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bounds_only() {
        let sol = solve_box_lp(&lp(&[2.0, -3.0], &[], &[], &[-1.0, -2.0], &[4.0, 5.0])).unwrap();
        assert_eq!(sol.x, vec![4.0, -2.0]);
        assert!((sol.objective - 14.0).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_vertex() {
        // max x + y s.t. x + 2y ≤ 4, 3x + y ≤ 6, 0 ≤ x, y ≤ 10 → (1.6, 1.2)
        let sol = solve_box_lp(&lp(&[1.0, 1.0], &[&[1.0, 2.0], &[3.0, 1.0]], &[4.0, 6.0], &[0.0, 0.0], &[10.0, 10.0]))
            .unwrap();
        assert!((sol.x[0] - 1.6).abs() < 1e-12 && (sol.x[1] - 1.2).abs() < 1e-12);
        assert!((sol.objective - 2.8).abs() < 1e-12);
    }

    #[test]
    fn covering_constraint() {
        // x + y ≥ 3 written as −x − y ≤ −3; minimise x + 2y
        let sol =
            solve_box_lp(&lp(&[-1.0, -2.0], &[&[-1.0, -1.0]], &[-3.0], &[0.0, 0.0], &[5.0, 5.0])).unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-12 && sol.x[1].abs() < 1e-12);
        assert!((sol.objective + 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_objective_with_fixed_variable() {
        let sol = solve_box_lp(&lp(&[0.0, 1.0], &[&[1.0, 1.0]], &[2.0], &[0.5, -1.0], &[0.5, 3.0])).unwrap();
        assert_eq!(sol.x[0], 0.5);
        assert!((sol.x[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_box() {
        let err = solve_box_lp(&lp(&[1.0], &[&[1.0]], &[-2.0], &[-1.0], &[1.0])).unwrap_err();
        assert!(matches!(err, LpError::Infeasible { .. }));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            solve_box_lp(&lp(&[1.0], &[&[1.0, 2.0]], &[1.0], &[0.0], &[1.0])),
            Err(LpError::Malformed(_))
        ));
        assert!(matches!(
            solve_box_lp(&lp(&[1.0], &[], &[], &[f64::NEG_INFINITY], &[1.0])),
            Err(LpError::Malformed(_))
        ));
        assert!(matches!(solve_box_lp(&lp(&[1.0], &[], &[], &[2.0], &[1.0])), Err(LpError::Malformed(_))));
    }

    #[test]
    fn degenerate_cone_stays_at_origin() {
        // every nonzero direction violates one of the homogeneous rows
        let rows: Vec<&[f64]> = vec![&[-1.0, 0.0], &[1.0, 0.0], &[0.0, -1.0], &[0.0, 1.0], &[1.0, 1.0]];
        let sol = solve_box_lp(&lp(&[1.0, 1.0], &rows, &[0.0; 5], &[-1.0, -1.0], &[1.0, 1.0])).unwrap();
        assert!(sol.objective.abs() < 1e-12);
        assert!(sol.x.iter().all(|v| v.abs() < 1e-12));
    }
}
