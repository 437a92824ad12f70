use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::{LinearProgram, LpSolution, LpStatus, Relation};
use crate::error::{Error, Result};

pub(super) fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let mut cost = vec![0.0; lp.num_vars()];
    for &(c, a) in lp.objective() {
        cost[c] += a;
    }
    let vars: Vec<_> = (0..lp.num_vars())
        .map(|c| problem.add_var(cost[c], (0.0, lp.upper(c))))
        .collect();
    for con in lp.constraints() {
        let op = match con.relation {
            Relation::Le => ComparisonOp::Le,
            Relation::Eq => ComparisonOp::Eq,
        };
        let expr: Vec<_> = con.terms.iter().map(|&(c, a)| (vars[c], a)).collect();
        problem.add_constraint(expr.as_slice(), op, con.rhs);
    }
    let outcome = match problem.solve() {
        Ok(o) => o,
        Err(microlp::Error::Infeasible) => return Ok(LpSolution::failed(LpStatus::Infeasible)),
        Err(microlp::Error::Unbounded) => return Ok(LpSolution::failed(LpStatus::Unbounded)),
        Err(e) => return Err(Error::SolverInconsistency(e.to_string())),
    };
    let sol = outcome
        .solution()
        .ok_or_else(|| Error::SolverInconsistency("sparse solve interrupted".into()))?;
    let values: Vec<f64> = vars.iter().map(|&v| sol.var_value_raw(v)).collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: lp.objective_at(&values),
        values,
    })
}
