//! Sparse linear programs and the solver contract.
//!
//! Programs are always maximizations over variables bounded in `[0, upper]`.
//! Two backends implement [`solve_lp`]: an in-repo dense two-phase simplex
//! (Dantzig pricing, Bland's rule once pivots stall) used for small programs,
//! and a sparse revised simplex for the large state spaces.

mod dense;
mod sparse;

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Feasibility tolerance used by the synthesis code.
pub const FEAS_TOL: f64 = 1e-7;
/// Tolerance for objective comparisons.
pub const OBJ_TOL: f64 = 1e-6;

/// Dense tableau cells above which [`Backend::Auto`] switches to the sparse solver.
const DENSE_CELL_LIMIT: usize = 400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    names: Vec<String>,
    upper: Vec<f64>,
    index: HashMap<String, usize>,
    objective: Vec<(usize, f64)>,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a column bounded in `[0, upper]` and returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, upper: f64) -> usize {
        let name = name.into();
        let col = self.names.len();
        let prev = self.index.insert(name.clone(), col);
        debug_assert!(prev.is_none(), "duplicate column {name}");
        self.names.push(name);
        self.upper.push(upper);
        col
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            relation,
            rhs,
        });
    }

    /// Sets the (maximized) objective.
    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>) {
        self.objective = terms;
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn var_name(&self, col: usize) -> &str {
        &self.names[col]
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn upper(&self, col: usize) -> f64 {
        self.upper[col]
    }

    pub fn objective(&self) -> &[(usize, f64)] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Checks that every referenced column exists, each column appears at
    /// most once per row, and all coefficients are finite.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let check_row = |what: &str, terms: &[(usize, f64)]| -> Result<()> {
            let mut seen = vec![false; n];
            for &(c, a) in terms {
                if c >= n {
                    return Err(Error::InvalidInstance(format!("{what} references missing column {c}")));
                }
                if seen[c] {
                    return Err(Error::InvalidInstance(format!("{what} repeats column {}", self.names[c])));
                }
                seen[c] = true;
                if !a.is_finite() {
                    return Err(Error::InvalidInstance(format!("{what} has a non-finite coefficient")));
                }
            }
            Ok(())
        };
        check_row("objective", &self.objective)?;
        for c in &self.constraints {
            check_row(&c.name, &c.terms)?;
            if !c.rhs.is_finite() {
                return Err(Error::InvalidInstance(format!("{} has a non-finite rhs", c.name)));
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(c, a)| a * x[c]).sum()
    }

    /// Largest violation of any bound or constraint at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, &v) in x.iter().enumerate() {
            worst = worst.max(-v).max(v - self.upper[c]);
        }
        for con in &self.constraints {
            let lhs: f64 = con.terms.iter().map(|&(c, a)| a * x[c]).sum();
            let gap = lhs - con.rhs;
            worst = worst.max(match con.relation {
                Relation::Le => gap,
                Relation::Eq => gap.abs(),
            });
        }
        worst
    }

    /// Text interchange dump (CPLEX-LP flavoured):
    ///
    /// ```text
    /// maximize
    ///  obj: +1 delta
    /// subject to
    ///  visit_0: +1 delta -0.5 a_3 <= 0
    /// bounds
    ///  0 <= delta <= 1
    /// end
    /// ```
    ///
    /// Coefficients are printed with `{:+}` so every term carries its sign.
    pub fn dump(&self) -> String {
        let mut out = String::from("maximize\n obj:");
        for &(c, a) in &self.objective {
            let _ = write!(out, " {a:+} {}", self.names[c]);
        }
        out.push_str("\nsubject to\n");
        for con in &self.constraints {
            let _ = write!(out, " {}:", con.name);
            for &(c, a) in &con.terms {
                let _ = write!(out, " {a:+} {}", self.names[c]);
            }
            let rel = match con.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
            };
            let _ = writeln!(out, " {rel} {}", con.rhs);
        }
        out.push_str("bounds\n");
        for (name, ub) in self.names.iter().zip(&self.upper) {
            let _ = writeln!(out, " 0 <= {name} <= {ub}");
        }
        out.push_str("end\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::Unbounded => "unbounded",
            Self::IterationLimit => "iteration limit reached",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: f64,
    /// Column values; empty unless `status` is optimal.
    pub values: Vec<f64>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn failed(status: LpStatus) -> Self {
        Self {
            status,
            objective_value: f64::NAN,
            values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Dense for small programs, sparse otherwise.
    #[default]
    Auto,
    Dense,
    Sparse,
}

/// Solves with [`Backend::Auto`]. An optimal solution is verified against
/// `tol` before it is returned.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpSolution> {
    solve_lp_with(lp, tol, Backend::Auto)
}

pub fn solve_lp_with(lp: &LinearProgram, tol: f64, backend: Backend) -> Result<LpSolution> {
    lp.validate()?;
    let backend = match backend {
        Backend::Auto => {
            let rows = lp.num_constraints() + lp.num_vars();
            let cols = 2 * lp.num_vars() + lp.num_constraints();
            if rows.saturating_mul(cols) <= DENSE_CELL_LIMIT {
                Backend::Dense
            } else {
                Backend::Sparse
            }
        }
        b => b,
    };
    let sol = match backend {
        Backend::Dense => dense::solve(lp),
        Backend::Sparse => sparse::solve(lp)?,
        Backend::Auto => unreachable!(),
    };
    if sol.is_optimal() {
        let viol = lp.max_violation(&sol.values);
        if viol > tol {
            return Err(Error::SolverInconsistency(format!("solution violates constraints by {viol:e}")));
        }
    }
    Ok(sol)
}

/// Dense solve that also reports one dual value per constraint. Meant for
/// small master programs; the primal solution is verified like [`solve_lp`].
pub fn solve_lp_with_duals(lp: &LinearProgram, tol: f64) -> Result<(LpSolution, Vec<f64>)> {
    lp.validate()?;
    let (sol, duals) = dense::solve_with_duals(lp);
    if sol.is_optimal() {
        let viol = lp.max_violation(&sol.values);
        if viol > tol {
            return Err(Error::SolverInconsistency(format!("solution violates constraints by {viol:e}")));
        }
    }
    Ok((sol, duals))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LinearProgram {
        let mut lp = LinearProgram::new();
        let d = lp.add_var("delta", 1.0);
        lp.add_constraint("cap", vec![(d, 1.0)], Relation::Le, 0.5);
        lp.set_objective(vec![(d, 1.0)]);
        lp
    }

    #[test]
    fn single_bound() {
        for backend in [Backend::Dense, Backend::Sparse] {
            let sol = solve_lp_with(&tiny(), 1e-9, backend).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!((sol.objective_value - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 1.0);
        lp.add_constraint("low", vec![(x, -1.0)], Relation::Le, -2.0);
        lp.set_objective(vec![(x, 1.0)]);
        for backend in [Backend::Dense, Backend::Sparse] {
            assert_eq!(solve_lp_with(&lp, 1e-9, backend).unwrap().status, LpStatus::Infeasible);
        }

        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::INFINITY);
        let y = lp.add_var("y", f64::INFINITY);
        lp.add_constraint("diff", vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        lp.set_objective(vec![(x, 1.0)]);
        for backend in [Backend::Dense, Backend::Sparse] {
            assert_eq!(solve_lp_with(&lp, 1e-9, backend).unwrap().status, LpStatus::Unbounded);
        }
    }

    #[test]
    fn equality_and_negative_rhs() {
        // max x + 2y  s.t. x + y = 1, -x <= -0.25  ->  x = 0.25, y = 0.75
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 1.0);
        let y = lp.add_var("y", 1.0);
        lp.add_constraint("sum", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 1.0);
        lp.add_constraint("floor", vec![(x, -1.0)], Relation::Le, -0.25);
        lp.set_objective(vec![(x, 1.0), (y, 2.0)]);
        for backend in [Backend::Dense, Backend::Sparse] {
            let sol = solve_lp_with(&lp, 1e-9, backend).unwrap();
            assert!((sol.objective_value - 1.75).abs() < 1e-9);
            assert!((sol.values[x] - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn duals_match_shadow_prices() {
        // max x + 2y  s.t. x + y = 1, -x <= -0.25, x + 3y <= 10
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::INFINITY);
        let y = lp.add_var("y", f64::INFINITY);
        lp.add_constraint("sum", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 1.0);
        lp.add_constraint("floor", vec![(x, -1.0)], Relation::Le, -0.25);
        lp.add_constraint("slack", vec![(x, 1.0), (y, 3.0)], Relation::Le, 10.0);
        lp.set_objective(vec![(x, 1.0), (y, 2.0)]);
        let (sol, duals) = solve_lp_with_duals(&lp, 1e-9).unwrap();
        assert!((sol.objective_value - 1.75).abs() < 1e-9);
        assert!((duals[0] - 2.0).abs() < 1e-9, "{duals:?}");
        assert!((duals[1] - 1.0).abs() < 1e-9, "{duals:?}");
        assert!(duals[2].abs() < 1e-9, "{duals:?}");

        // negative-rhs equality: max -x s.t. -x - y = -1 (dual -1... objective = y*b)
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::INFINITY);
        let y = lp.add_var("y", f64::INFINITY);
        lp.add_constraint("neg", vec![(x, -1.0), (y, -1.0)], Relation::Eq, -1.0);
        lp.set_objective(vec![(x, 2.0), (y, 1.0)]);
        let (sol, duals) = solve_lp_with_duals(&lp, 1e-9).unwrap();
        assert!((sol.objective_value - 2.0).abs() < 1e-9);
        assert!((duals[0] + 2.0).abs() < 1e-9, "{duals:?}");
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 1.0);
        let y = lp.add_var("y", 1.0);
        lp.add_constraint("a", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 1.0);
        lp.add_constraint("b", vec![(x, 2.0), (y, 2.0)], Relation::Eq, 2.0);
        lp.set_objective(vec![(x, 3.0), (y, 1.0)]);
        let sol = solve_lp_with(&lp, 1e-9, Backend::Dense).unwrap();
        assert!((sol.objective_value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_missing_columns() {
        let mut lp = tiny();
        lp.add_constraint("bad", vec![(7, 1.0)], Relation::Le, 1.0);
        assert!(lp.validate().is_err());
    }

    #[test]
    fn dump_is_line_oriented() {
        let text = tiny().dump();
        assert_eq!(text, "maximize\n obj: +1 delta\nsubject to\n cap: +1 delta <= 0.5\nbounds\n 0 <= delta <= 1\nend\n");
    }
}
