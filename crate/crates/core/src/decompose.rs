//! Column generation for the ordered programs.
//!
//! The feasible region of an ordered program is a product of per-order
//! chain polytopes whose vertices are deterministic stopping rules. The
//! master problem keeps one weight per generated rule and only the coupling
//! rows (visit per role, reward, start); pricing is a backward recursion
//! along each order. The final mixture is mapped back onto the columns of
//! the full program and checked against every one of its constraints.

use crate::error::{Error, Result};
use crate::lp::{solve_lp_with_duals, LinearProgram, LpSolution, LpStatus, Relation, FEAS_TOL};
use crate::program::{Layout, PolicyProgram, SolvedProgram};

const PRICE_TOL: f64 = 1e-10;
const MAX_ROUNDS: usize = 5_000;
const COLUMNS_PER_ROUND: usize = 32;

#[derive(Debug, Clone, PartialEq)]
struct Rule {
    order: usize,
    /// `stop[pos][j]`: stop on value `j` at position `pos`.
    stop: Vec<Vec<bool>>,
    /// Per-role visit contribution `sum_pos reach(pos) / m_t`.
    visit: Vec<f64>,
    reward: f64,
}

fn evaluate(prog: &PolicyProgram, orders: &[Vec<usize>], order: usize, stop: Vec<Vec<bool>>) -> Rule {
    let profile = &prog.profile;
    let mut visit = vec![0.0; profile.num_types()];
    let mut reward = 0.0;
    let mut reach = 1.0;
    for (pos, &t) in orders[order].iter().enumerate() {
        visit[t] += reach / profile.multiplicity(t) as f64;
        let d = profile.dist(t);
        let mut leave = 0.0;
        for (j, (x, p)) in d.iter().enumerate() {
            if stop[pos][j] {
                reward += reach * p * x;
                leave += p;
            }
        }
        reach *= (1.0 - leave).max(0.0);
    }
    Rule {
        order,
        stop,
        visit,
        reward,
    }
}

/// Best deterministic rule along `order` for visit prices `y` and reward price `z`.
fn price(prog: &PolicyProgram, order: &[usize], y: &[f64], z: f64) -> (f64, Vec<Vec<bool>>) {
    let profile = &prog.profile;
    let mut stop = vec![Vec::new(); order.len()];
    let mut next = 0.0;
    for (pos, &t) in order.iter().enumerate().rev() {
        let d = profile.dist(t);
        let mut w = y[t] / profile.multiplicity(t) as f64;
        stop[pos] = d
            .iter()
            .map(|(x, p)| {
                let here = z * x;
                let s = here > next;
                w += p * if s { here } else { next };
                s
            })
            .collect();
        next = w;
    }
    (next, stop)
}

fn master(prog: &PolicyProgram, rules: &[Rule]) -> Result<(LpSolution, Vec<f64>)> {
    let k = prog.profile.num_types();
    let mut lp = LinearProgram::new();
    let delta = lp.add_var("delta", 1.0);
    let weights: Vec<usize> = (0..rules.len()).map(|r| lp.add_var(format!("w{r}"), f64::INFINITY)).collect();
    for t in 0..k {
        let mut row = vec![(delta, 1.0)];
        row.extend(rules.iter().zip(&weights).map(|(r, &c)| (c, -r.visit[t])));
        lp.add_constraint(format!("visit_{t}"), row, Relation::Le, 0.0);
    }
    let mut row = vec![(delta, prog.expected_max)];
    row.extend(rules.iter().zip(&weights).map(|(r, &c)| (c, -r.reward)));
    lp.add_constraint("reward", row, Relation::Le, 0.0);
    lp.add_constraint("start", weights.iter().map(|&c| (c, 1.0)).collect(), Relation::Eq, 1.0);
    lp.set_objective(vec![(delta, 1.0)]);
    let (sol, duals) = solve_lp_with_duals(&lp, FEAS_TOL)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(sol.status));
    }
    Ok((sol, duals))
}

pub(crate) fn solve_ordered(prog: &PolicyProgram) -> Result<SolvedProgram> {
    let Layout::Ordered { orders, alpha, arrivals } = &prog.layout else {
        return Err(Error::Parameter("column generation needs an ordered program".into()));
    };
    let k = prog.profile.num_types();
    let n = prog.profile.n();
    let never = |o: usize| -> Vec<Vec<bool>> {
        orders[o].iter().map(|&t| vec![false; prog.profile.dist(t).len()]).collect()
    };
    let mut rules = vec![evaluate(prog, orders, 0, never(0))];

    let mut rounds = 0;
    let (sol, _) = loop {
        let (sol, duals) = master(prog, &rules)?;
        let y = &duals[..k];
        let z = duals[k];
        let mu = duals[k + 1];
        let mut candidates: Vec<(f64, usize, Vec<Vec<bool>>)> = orders
            .iter()
            .enumerate()
            .filter_map(|(o, order)| {
                let (w, stop) = price(prog, order, y, z);
                let gain = w - mu;
                (gain > PRICE_TOL * (1.0 + mu.abs())).then_some((gain, o, stop))
            })
            .collect();
        if candidates.is_empty() {
            break (sol, duals);
        }
        rounds += 1;
        if rounds > MAX_ROUNDS {
            return Err(Error::Solver(LpStatus::IterationLimit));
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
        let before = rules.len();
        for (_, o, stop) in candidates.into_iter().take(COLUMNS_PER_ROUND) {
            if !rules.iter().any(|r| r.order == o && r.stop == stop) {
                rules.push(evaluate(prog, orders, o, stop));
            }
        }
        if rules.len() == before {
            // every priced rule is already present: the master is optimal up to round-off
            break (sol, duals);
        }
    };

    let mut values = vec![0.0; prog.lp.num_vars()];
    for (r, rule) in rules.iter().enumerate() {
        let w = sol.values[1 + r];
        if w <= 0.0 {
            continue;
        }
        let mut reach = w;
        for pos in 0..n {
            let t = orders[rule.order][pos];
            values[alpha[rule.order][pos]] += reach;
            let cols = arrivals[rule.order][pos];
            let mut leave = 0.0;
            for (j, &p) in prog.profile.dist(t).probs().iter().enumerate() {
                if rule.stop[pos][j] {
                    values[cols.beta + j] += reach * p;
                    leave += p;
                } else {
                    values[cols.gamma + j] += reach * p;
                }
            }
            reach *= (1.0 - leave).max(0.0);
        }
    }
    let delta = sol.values[0];
    values[prog.delta] = delta;
    let viol = prog.lp.max_violation(&values);
    if viol > FEAS_TOL {
        return Err(Error::SolverInconsistency(format!(
            "reconstructed solution violates constraints by {viol:e}"
        )));
    }
    Ok(SolvedProgram {
        program: prog.clone(),
        solution: LpSolution {
            status: LpStatus::Optimal,
            objective_value: prog.lp.objective_at(&values),
            values,
        },
        delta,
    })
}

#[cfg(test)]
mod tests {
    use crate::dist::{DiscreteDistribution, Instance};
    use crate::program::{build_folp, build_rfolp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, s: usize) -> Instance {
        let draw = |rng: &mut ChaCha8Rng| {
            let m = rng.random_range(1..=3);
            let pairs: Vec<(f64, f64)> =
                (0..m).map(|_| (rng.random_range(0..6) as f64, rng.random_range(1..5) as f64)).collect();
            let total: f64 = pairs.iter().map(|p| p.1).sum();
            let pairs: Vec<(f64, f64)> = pairs.iter().map(|&(x, w)| (x, w / total)).collect();
            DiscreteDistribution::from_pairs(&pairs).unwrap()
        };
        let g = draw(rng);
        let mut dists = vec![g; s];
        dists.extend((s..n).map(|_| draw(rng)));
        Instance::new(dists, s).unwrap()
    }

    #[test]
    fn matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..12 {
            let n = rng.random_range(1..=4);
            let s = rng.random_range(0..=n);
            let inst = random_instance(&mut rng, n, s);
            for prog in [build_folp(&inst).unwrap(), build_rfolp(&inst).unwrap()] {
                let direct = prog.solve_direct().unwrap().delta;
                let cg = prog.solve().unwrap().delta;
                assert!((direct - cg).abs() < 1e-7, "{direct} vs {cg} on {inst:?}");
            }
        }
    }
}
