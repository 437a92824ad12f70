//! Dense two-phase tableau simplex.
//!
//! Dantzig pricing by default; after a run of degenerate pivots the solver
//! falls back to Bland's smallest-index rule, which cannot cycle. Only meant
//! for the small programs used as oracles and in tests.

use super::{LinearProgram, LpSolution, LpStatus, Relation};

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-8;
const DEGENERATE_STREAK: usize = 30;

#[derive(Clone, Copy, PartialEq)]
enum RowKind {
    Le,
    Ge,
    Eq,
}

struct Tableau {
    rows: usize,
    width: usize,
    cells: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    blocked: Vec<bool>,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.width + c]
    }

    fn pivot(&mut self, p: usize, e: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(p, e);
        for c in 0..w {
            self.cells[p * w + c] *= inv;
        }
        self.cells[p * w + e] = 1.0;
        let (before, rest) = self.cells.split_at_mut(p * w);
        let (prow, after) = rest.split_at_mut(w);
        let eliminate = |row: &mut [f64]| {
            let f = row[e];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[e] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        eliminate(&mut self.obj);
        self.basis[p] = e;
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let rhs = self.rhs_col();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..rhs {
            if self.blocked[j] || self.obj[j] <= COST_TOL {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, d)| self.obj[j] > d) {
                best = Some((j, self.obj[j]));
            }
        }
        best.map(|(j, _)| j)
    }

    fn leaving(&self, e: usize) -> Option<(usize, f64)> {
        let rhs = self.rhs_col();
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, e);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.at(r, rhs).max(0.0) / a;
            best = match best {
                None => Some((r, ratio)),
                Some((br, bratio)) => {
                    if ratio < bratio - 1e-12 || (ratio <= bratio + 1e-12 && self.basis[r] < self.basis[br]) {
                        Some((r, ratio))
                    } else {
                        Some((br, bratio))
                    }
                }
            };
        }
        best
    }

    /// Runs simplex iterations on the current objective row.
    fn optimize(&mut self, max_iter: usize) -> Result<(), LpStatus> {
        let mut streak = 0;
        for _ in 0..max_iter {
            let bland = streak >= DEGENERATE_STREAK;
            let Some(e) = self.entering(bland) else {
                return Ok(());
            };
            let Some((p, ratio)) = self.leaving(e) else {
                return Err(LpStatus::Unbounded);
            };
            if ratio <= 1e-12 {
                streak += 1;
            } else {
                streak = 0;
            }
            self.pivot(p, e);
        }
        // Bland's rule terminates; hitting the cap means numerical trouble.
        Err(LpStatus::IterationLimit)
    }
}

pub(super) fn solve(lp: &LinearProgram) -> LpSolution {
    solve_with_duals(lp).0
}

/// Solves and also returns one dual value per constraint of `lp` (bound
/// rows excluded), with the sign convention `objective = sum_r y_r b_r`
/// at optimality for a problem without active upper bounds.
pub(super) fn solve_with_duals(lp: &LinearProgram) -> (LpSolution, Vec<f64>) {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<f64>, RowKind, f64)> = Vec::new();
    for con in lp.constraints() {
        let mut dense = vec![0.0; n];
        for &(c, a) in &con.terms {
            dense[c] += a;
        }
        let kind = match con.relation {
            Relation::Le => RowKind::Le,
            Relation::Eq => RowKind::Eq,
        };
        rows.push((dense, kind, con.rhs));
    }
    for c in 0..n {
        let ub = lp.upper(c);
        if ub.is_finite() {
            let mut dense = vec![0.0; n];
            dense[c] = 1.0;
            rows.push((dense, RowKind::Le, ub));
        }
    }
    let mut flipped = vec![false; rows.len()];
    for (r, (row, kind, rhs)) in rows.iter_mut().enumerate() {
        if *rhs < 0.0 {
            flipped[r] = true;
            row.iter_mut().for_each(|a| *a = -*a);
            *rhs = -*rhs;
            *kind = match kind {
                RowKind::Le => RowKind::Ge,
                RowKind::Ge => RowKind::Le,
                RowKind::Eq => RowKind::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != RowKind::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != RowKind::Le).count();
    let cols = n + n_slack + n_art;
    let width = cols + 1;
    let mut t = Tableau {
        rows: m,
        width,
        cells: vec![0.0; m * width],
        obj: vec![0.0; width],
        basis: vec![0; m],
        blocked: vec![false; cols],
    };
    let mut next_slack = n;
    let mut next_art = n + n_slack;
    let mut art_rows = Vec::new();
    // per row: the column whose reduced cost yields the dual, and its sign
    let mut dual_col = Vec::with_capacity(m);
    for (r, (row, kind, rhs)) in rows.iter().enumerate() {
        t.cells[r * width..r * width + n].copy_from_slice(row);
        t.cells[r * width + cols] = *rhs;
        match kind {
            RowKind::Le => {
                t.cells[r * width + next_slack] = 1.0;
                t.basis[r] = next_slack;
                dual_col.push((next_slack, -1.0));
                next_slack += 1;
            }
            RowKind::Ge => {
                t.cells[r * width + next_slack] = -1.0;
                // flipped `<=` row: both the row and its slack changed sign
                dual_col.push((next_slack, -1.0));
                next_slack += 1;
                t.cells[r * width + next_art] = 1.0;
                t.basis[r] = next_art;
                art_rows.push(r);
                next_art += 1;
            }
            RowKind::Eq => {
                dual_col.push((next_art, if flipped[r] { 1.0 } else { -1.0 }));
                t.cells[r * width + next_art] = 1.0;
                t.basis[r] = next_art;
                art_rows.push(r);
                next_art += 1;
            }
        }
    }
    let max_iter = 50_000 + 50 * (m + cols);
    let is_art = |c: usize| c >= n + n_slack && c < cols;

    if !art_rows.is_empty() {
        for &r in &art_rows {
            for c in 0..width {
                t.obj[c] += t.at(r, c);
            }
        }
        for c in n + n_slack..cols {
            t.obj[c] = 0.0;
        }
        if let Err(status) = t.optimize(max_iter) {
            return (LpSolution::failed(status), Vec::new());
        }
        let infeasibility = t.obj[cols];
        if infeasibility > PHASE1_TOL * (1.0 + m as f64).sqrt() {
            return (LpSolution::failed(LpStatus::Infeasible), Vec::new());
        }
        for r in 0..m {
            if is_art(t.basis[r]) {
                if let Some(c) = (0..n + n_slack).find(|&c| t.at(r, c).abs() > 1e-9) {
                    t.pivot(r, c);
                }
            }
        }
        for c in n + n_slack..cols {
            t.blocked[c] = true;
        }
    }

    let mut cost = vec![0.0; cols];
    for &(c, a) in lp.objective() {
        cost[c] += a;
    }
    t.obj.iter_mut().for_each(|x| *x = 0.0);
    t.obj[..cols].copy_from_slice(&cost);
    for r in 0..m {
        let cb = cost[t.basis[r]];
        if cb != 0.0 {
            for c in 0..width {
                t.obj[c] -= cb * t.at(r, c);
            }
        }
    }
    if let Err(status) = t.optimize(max_iter) {
        return (LpSolution::failed(status), Vec::new());
    }

    let mut values = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            values[t.basis[r]] = t.at(r, cols).max(0.0);
        }
    }
    let duals = dual_col[..lp.num_constraints()].iter().map(|&(c, sign)| sign * t.obj[c]).collect();
    (
        LpSolution {
            status: LpStatus::Optimal,
            objective_value: lp.objective_at(&values),
            values,
        },
        duals,
    )
}
