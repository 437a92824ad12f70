//! Exact small-instance computations: optimal values under each arrival
//! model, exact evaluation of randomized policies, and enumeration checks of
//! the inequalities the reduction relies on.

use crate::dist::{exact_expected_max, geometric_mean_cdf, DiscreteDistribution, Instance, ModelKind};
use crate::error::{Error, Result};
use crate::estimation::multiplicative_band_check;
use crate::policy::{Context, DecisionRule, Observation, RandomizedPolicy};
use crate::profile::{multiset_orderings, permutations, StateSpace, TypeProfile};
use crate::reduction::BernoulliFilter;

pub const MAX_SUBSET_DP_N: usize = 12;
pub const MAX_FIXED_ORDER_N: usize = 20;
pub const MAX_ENUM_ORDERS: usize = 50_000;
pub const MAX_EVAL_STATES: usize = 2_000_000;
pub const MAX_CHECK_S: usize = 6;

/// Optimal prophet-secretary value by subset recursion,
/// `V(S) = (1/|S|) sum_{i in S} E[max(X_i, V(S - i))]`.
pub fn optimal_ps_value_subsets(inst: &Instance) -> Result<f64> {
    let n = inst.n();
    if n > MAX_SUBSET_DP_N {
        return Err(Error::SizeGuard {
            what: "variables (subset recursion)",
            size: n,
            limit: MAX_SUBSET_DP_N,
        });
    }
    let mut v = vec![0.0; 1 << n];
    for mask in 1usize..1 << n {
        let size = mask.count_ones() as f64;
        v[mask] = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| inst.dist(i).expected_max_with(v[mask ^ 1 << i]))
            .sum::<f64>()
            / size;
    }
    Ok(v[(1 << n) - 1])
}

/// Same recursion over multisets of the pooled roles.
pub fn optimal_ps_value_multiset(inst: &Instance) -> Result<f64> {
    let profile = TypeProfile::pooled(inst);
    let space = StateSpace::new(profile.multiplicities(), MAX_EVAL_STATES)?;
    let mut v = vec![0.0; space.len()];
    for idx in 1..space.len() {
        let s = space.state(idx);
        let size = s.size() as f64;
        v[idx] = s
            .support()
            .map(|t| s.count(t) as f64 * profile.dist(t).expected_max_with(v[idx - space.stride(t)]))
            .sum::<f64>()
            / size;
    }
    Ok(v[space.len() - 1])
}

pub fn optimal_ps_value(inst: &Instance) -> Result<f64> {
    if inst.n() <= MAX_SUBSET_DP_N {
        optimal_ps_value_subsets(inst)
    } else {
        optimal_ps_value_multiset(inst)
    }
}

/// Backward induction for a fixed arrival order (0-based indices).
pub fn optimal_fixed_order_value(inst: &Instance, order: &[usize]) -> Result<f64> {
    let n = inst.n();
    if n > MAX_FIXED_ORDER_N {
        return Err(Error::SizeGuard {
            what: "variables (fixed order)",
            size: n,
            limit: MAX_FIXED_ORDER_N,
        });
    }
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::Parameter(format!("{order:?} is not a permutation of 0..{n}")));
    }
    Ok(order.iter().rev().fold(0.0, |v, &i| inst.dist(i).expected_max_with(v)))
}

/// Best fixed order, enumerated over arrangements of the pooled roles.
pub fn optimal_fo_value(inst: &Instance) -> Result<f64> {
    let profile = TypeProfile::pooled(inst);
    let orders = multiset_orderings(profile.multiplicities(), MAX_ENUM_ORDERS)?;
    let mut best = f64::NEG_INFINITY;
    for roles in orders {
        let v = roles.iter().rev().fold(0.0, |v, &t| profile.dist(t).expected_max_with(v));
        best = best.max(v);
    }
    Ok(best)
}

/// Optimal value for the given model (free order: best order).
pub fn optimal_value(inst: &Instance, model: ModelKind) -> Result<f64> {
    match model {
        ModelKind::ProphetSecretary => optimal_ps_value(inst),
        ModelKind::FreeOrder => optimal_fo_value(inst),
        ModelKind::FixedOrder => optimal_fixed_order_value(inst, &(0..inst.n()).collect::<Vec<_>>()),
    }
}

/// Exact performance of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub expected_reward: f64,
    /// Probability that each variable is observed before the run stops.
    pub visit_prob: Vec<f64>,
    /// `expected_reward / E[max]`.
    pub ratio: f64,
    /// Probability that a decision used the off-support fallback.
    pub off_support_mass: f64,
}

impl EvalReport {
    pub fn min_visit(&self) -> f64 {
        self.visit_prob.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Variables sharing a role and an identical law.
struct Group {
    role: usize,
    members: Vec<usize>,
    law: Vec<Observation>,
}

fn group_variables(pol: &RandomizedPolicy, inst: &Instance) -> Vec<Group> {
    let mut groups: Vec<(usize, &DiscreteDistribution, Vec<usize>)> = Vec::new();
    for i in 0..inst.n() {
        let role = pol.profile.type_of(i);
        let d = inst.dist(i);
        match groups.iter_mut().find(|(r, g, _)| *r == role && *g == d) {
            Some(g) => g.2.push(i),
            None => groups.push((role, d, vec![i])),
        }
    }
    groups
        .into_iter()
        .map(|(role, d, members)| Group {
            role,
            members,
            law: pol.preprocess.law(d),
        })
        .collect()
}

#[derive(Clone, Copy, Default)]
struct StopStats {
    prob: f64,
    reward: f64,
    off: f64,
}

fn stop_stats(pol: &RandomizedPolicy, ctx: Context, role: usize, law: &[Observation]) -> Result<StopStats> {
    let mut st = StopStats::default();
    for o in law {
        let d = pol.decide(ctx, role, o.observed)?;
        st.prob += o.prob * d.accept;
        st.reward += o.prob * d.accept * o.reward;
        if d.off_support {
            st.off += o.prob;
        }
    }
    Ok(st)
}

/// Forward propagation of reach probabilities through the run.
pub fn exact_policy_value(pol: &RandomizedPolicy, inst: &Instance, model: ModelKind) -> Result<EvalReport> {
    let n = inst.n();
    if pol.n() != n {
        return Err(Error::Mismatch(format!("policy for {} variables, instance has {n}", pol.n())));
    }
    let mut visit = vec![0.0; n];
    let mut reward = 0.0;
    let mut off = 0.0;
    match (model, &pol.rule) {
        (ModelKind::FixedOrder, DecisionRule::Adaptive { space, .. }) => {
            let mut counts = pol.profile.full_state();
            let mut reach = 1.0;
            for (i, v) in visit.iter_mut().enumerate() {
                let role = pol.profile.type_of(i);
                let ctx = Context::State(space.index(&counts));
                let st = stop_stats(pol, ctx, role, &pol.preprocess.law(inst.dist(i)))?;
                *v = reach;
                reward += reach * st.reward;
                off += reach * st.off;
                reach *= 1.0 - st.prob;
                counts = counts.without(role);
            }
        }
        (ModelKind::ProphetSecretary, DecisionRule::Adaptive { space, .. }) => {
            let groups = group_variables(pol, inst);
            let mult: Vec<usize> = groups.iter().map(|g| g.members.len()).collect();
            let gspace = StateSpace::new(&mult, MAX_EVAL_STATES)?;
            let mut alpha = vec![0.0; gspace.len()];
            alpha[gspace.len() - 1] = 1.0;
            let mut gvisit = vec![0.0; groups.len()];
            for idx in (1..gspace.len()).rev() {
                let a = alpha[idx];
                if a == 0.0 {
                    continue;
                }
                let s = gspace.state(idx);
                let size = s.size() as f64;
                let tidx: usize = s.0.iter().zip(&groups).map(|(&c, g)| c as usize * space.stride(g.role)).sum();
                for g in s.support() {
                    let mass = a * s.count(g) as f64 / size;
                    let st = stop_stats(pol, Context::State(tidx), groups[g].role, &groups[g].law)?;
                    gvisit[g] += mass;
                    reward += mass * st.reward;
                    off += mass * st.off;
                    alpha[idx - gspace.stride(g)] += mass * (1.0 - st.prob);
                }
            }
            spread(&groups, &gvisit, &mut visit);
        }
        (ModelKind::FreeOrder, DecisionRule::Ordered { branches }) => {
            let groups = group_variables(pol, inst);
            let mult: Vec<usize> = groups.iter().map(|g| g.members.len()).collect();
            let gspace = StateSpace::new(&mult, MAX_EVAL_STATES)?;
            let mut gvisit = vec![0.0; groups.len()];
            for (b, branch) in branches.iter().enumerate() {
                // decisions depend only on (position, group)
                let mut cache = vec![vec![None; groups.len()]; n];
                let mut alpha = vec![0.0; gspace.len()];
                alpha[gspace.len() - 1] = branch.weight;
                for idx in (1..gspace.len()).rev() {
                    let a = alpha[idx];
                    if a == 0.0 {
                        continue;
                    }
                    let s = gspace.state(idx);
                    let pos = n - s.size();
                    let role = branch.order[pos];
                    let avail: u32 = s.support().filter(|&g| groups[g].role == role).map(|g| s.count(g)).sum();
                    if avail == 0 {
                        return Err(Error::PolicyCoverage(format!("no variable of role {role} left at position {pos}")));
                    }
                    for g in s.support().filter(|&g| groups[g].role == role) {
                        let mass = a * s.count(g) as f64 / avail as f64;
                        let st = match cache[pos][g] {
                            Some(st) => st,
                            None => {
                                let st = stop_stats(pol, Context::Position { branch: b, pos }, role, &groups[g].law)?;
                                cache[pos][g] = Some(st);
                                st
                            }
                        };
                        gvisit[g] += mass;
                        reward += mass * st.reward;
                        off += mass * st.off;
                        alpha[idx - gspace.stride(g)] += mass * (1.0 - st.prob);
                    }
                }
            }
            spread(&groups, &gvisit, &mut visit);
        }
        (model, _) => {
            return Err(Error::Mismatch(format!("policy kind does not match the {model} model")));
        }
    }
    let emax = exact_expected_max(inst);
    Ok(EvalReport {
        expected_reward: reward,
        visit_prob: visit,
        ratio: if emax > 0.0 { reward / emax } else { 1.0 },
        off_support_mass: off,
    })
}

fn spread(groups: &[Group], gvisit: &[f64], visit: &mut [f64]) {
    for (g, group) in groups.iter().enumerate() {
        let each = gvisit[g] / group.members.len() as f64;
        for &i in &group.members {
            visit[i] = each;
        }
    }
}

fn check_pool(dists: &[DiscreteDistribution]) -> Result<()> {
    if dists.is_empty() || dists.len() > MAX_CHECK_S {
        return Err(Error::SizeGuard {
            what: "pooled distributions",
            size: dists.len(),
            limit: MAX_CHECK_S,
        });
    }
    Ok(())
}

/// `P(X_sigma(i) <= tau_i for all i <= k)` under a uniformly random
/// permutation, against `prod_{i<=k} G(tau_i)`.
pub fn enumerate_check_csz(dists: &[DiscreteDistribution], thresholds: &[f64], k: usize) -> Result<(f64, f64)> {
    check_pool(dists)?;
    let s = dists.len();
    if k == 0 || k > s || thresholds.len() < k {
        return Err(Error::Parameter(format!("k = {k} needs 1 <= k <= {s} thresholds")));
    }
    let perms = permutations(s);
    let lhs = perms
        .iter()
        .map(|p| (0..k).map(|i| dists[p[i]].cdf(thresholds[i])).product::<f64>())
        .sum::<f64>()
        / perms.len() as f64;
    let g = geometric_mean_cdf(dists)?;
    let rhs = (0..k).map(|i| g.cdf(thresholds[i])).product();
    Ok((lhs, rhs))
}

/// `(1/s) sum E[X_i 1{X_i > tau}]` against `(1-eps) E[Y 1{Y > tau}]`,
/// `Y` drawn from the geometric-mean law.
pub fn eps_small_ineq(dists: &[DiscreteDistribution], tau: f64, eps: f64) -> Result<(f64, f64)> {
    if dists.is_empty() {
        return Err(Error::Parameter("empty pool".into()));
    }
    if let Some(i) = dists.iter().position(|d| !d.is_eps_small(eps)) {
        return Err(Error::Precondition(format!("distribution {} is not {eps}-small", i + 1)));
    }
    let lhs = dists.iter().map(|d| d.mean_above(tau)).sum::<f64>() / dists.len() as f64;
    let rhs = (1.0 - eps) * geometric_mean_cdf(dists)?.mean_above(tau);
    Ok((lhs, rhs))
}

/// Slack constant standing in for the unstated `O(eps/n^2)` term.
pub const GEOMETRIC_MEAN_SLACK: f64 = 64.0;

/// `(prod_{i<s} x_i)^(1/(s-1))` against `(1-eps) (prod x_i)^(1/s) - c eps / n^2`.
pub fn geometric_mean_gap(xs: &[f64], eps: f64, n: usize) -> Result<(f64, f64)> {
    let s = xs.len();
    if s < 2 || xs.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Parameter("need at least two values in [0, 1]".into()));
    }
    if (n as f64) < eps.powi(-2) || 2 * s < n {
        return Err(Error::Precondition(format!("needs n >= 1/eps^2 and s >= n/2 (n = {n}, s = {s})")));
    }
    let log_prod = |v: &[f64]| v.iter().map(|x| x.ln()).sum::<f64>();
    let lhs = (log_prod(&xs[..s - 1]) / (s - 1) as f64).exp();
    let rhs = (1.0 - eps) * (log_prod(xs) / s as f64).exp() - GEOMETRIC_MEAN_SLACK * eps / (n * n) as f64;
    Ok((lhs, rhs))
}

/// The instance with every variable fixed at the given outcome.
fn point_instance(values: &[f64]) -> Result<Instance> {
    Instance::independent(values.iter().map(|&x| DiscreteDistribution::point_mass(x)).collect::<Result<_>>()?)
}

/// Every joint outcome of the instance with its probability.
fn joint_outcomes(inst: &Instance, limit: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    let size: usize = inst.dists().iter().map(|d| d.len()).product();
    if size > limit {
        return Err(Error::SizeGuard {
            what: "joint outcomes",
            size,
            limit,
        });
    }
    let mut out = vec![(Vec::new(), 1.0)];
    for d in inst.dists() {
        out = out
            .into_iter()
            .flat_map(|(xs, p)| {
                d.iter().map(move |(x, q)| {
                    let mut v = xs.clone();
                    v.push(x);
                    (v, p * q)
                })
            })
            .collect();
    }
    Ok(out)
}

/// Both sides of `E(1_D ALG) >= (1-alpha) sum_i E(1{X_i > M_i} X_i) P(A_i | B_i)`
/// with `1 - alpha = prod_i F_i(M_i)`, by enumeration of joint outcomes.
pub fn enumerate_check_payoff(
    inst: &Instance,
    m: &[f64],
    pol: &RandomizedPolicy,
    model: ModelKind,
) -> Result<(f64, f64)> {
    let n = inst.n();
    if m.len() != n {
        return Err(Error::Mismatch(format!("{} thresholds for {n} variables", m.len())));
    }
    for (i, &mi) in m.iter().enumerate() {
        if pol.tail[pol.profile.type_of(i)] > mi {
            return Err(Error::Precondition(format!("variable {} is not accepted above {mi}", i + 1)));
        }
    }
    let mut lhs = 0.0;
    let mut ab = vec![0.0; n];
    let mut b = vec![0.0; n];
    for (xs, p) in joint_outcomes(inst, 100_000)? {
        let rep = exact_policy_value(pol, &point_instance(&xs)?, model)?;
        let above: Vec<bool> = xs.iter().zip(m).map(|(x, mi)| x > mi).collect();
        if above.iter().any(|&a| a) {
            lhs += p * rep.expected_reward;
        }
        for i in 0..n {
            let b_i = (0..n).all(|j| j == i || !above[j]);
            if b_i {
                b[i] += p;
                ab[i] += p * rep.visit_prob[i];
            }
        }
    }
    let keep: f64 = (0..n).map(|i| inst.dist(i).cdf(m[i])).product();
    let rhs = keep
        * (0..n)
            .map(|i| {
                let tail = inst.dist(i).mean_above(m[i]);
                if b[i] > 0.0 {
                    tail * ab[i] / b[i]
                } else {
                    0.0
                }
            })
            .sum::<f64>();
    Ok((lhs, rhs))
}

/// Value of the Bernoulli-filtered policy on `F` against `(1-eps)` times the
/// value of the plain policy on `F'`.
pub fn enumerate_check_close2(
    pol: &RandomizedPolicy,
    f: &[DiscreteDistribution],
    fp: &[DiscreteDistribution],
    eps: f64,
    model: ModelKind,
) -> Result<(f64, f64)> {
    if f.len() != fp.len() {
        return Err(Error::Mismatch("instances differ in length".into()));
    }
    for (i, (a, b)) in f.iter().zip(fp).enumerate() {
        if !multiplicative_band_check(a, b, f64::INFINITY, eps) {
            return Err(Error::Precondition(format!("variable {} violates the multiplicative band", i + 1)));
        }
    }
    let filter = BernoulliFilter::for_eps(eps)?;
    let filtered = Instance::independent(f.iter().map(|d| filter.filtered(d)).collect())?;
    let lhs = exact_policy_value(pol, &filtered, model)?.expected_reward;
    let rhs = (1.0 - eps) * exact_policy_value(pol, &Instance::independent(fp.to_vec())?, model)?.expected_reward;
    Ok((lhs, rhs))
}

/// Value of a position-threshold rule (accept at position `i` iff `X >= tau_i`)
/// on variables presented in the given order.
pub fn threshold_rule_value(dists: &[&DiscreteDistribution], tau: &[f64]) -> f64 {
    let mut reach = 1.0;
    let mut value = 0.0;
    for (d, &t) in dists.iter().zip(tau) {
        let accept = 1.0 - d.cdf(t) + d.mass_at(t);
        let gain: f64 = d.iter().filter(|&(x, _)| x >= t).map(|(x, p)| x * p).sum();
        value += reach * gain;
        reach *= 1.0 - accept;
    }
    value
}

/// Both sides of the pooling comparison: value of a threshold rule when the
/// first `s` variables are uniformly shuffled, against its value when they
/// are replaced by i.i.d. copies of their geometric mean. Returns
/// `(value on shuffled I, value on I', E[max] of I)`.
pub fn eq_iid_sides(inst: &Instance, s: usize, sigma: &[usize], tau: &[f64]) -> Result<(f64, f64, f64)> {
    let n = inst.n();
    if s == 0 || s > n || s > MAX_CHECK_S {
        return Err(Error::Parameter(format!("pool size {s} outside 1..={}", n.min(MAX_CHECK_S))));
    }
    if sigma.len() != n || tau.len() != n {
        return Err(Error::Mismatch("order and thresholds must cover every variable".into()));
    }
    let g = geometric_mean_cdf(&inst.dists()[..s])?;
    let rhos = permutations(s);
    let mut shuffled = 0.0;
    for rho in &rhos {
        let order: Vec<&DiscreteDistribution> = sigma
            .iter()
            .map(|&j| if j < s { inst.dist(rho[j]) } else { inst.dist(j) })
            .collect();
        shuffled += threshold_rule_value(&order, tau);
    }
    shuffled /= rhos.len() as f64;
    let pooled: Vec<&DiscreteDistribution> = sigma.iter().map(|&j| if j < s { &g } else { inst.dist(j) }).collect();
    Ok((shuffled, threshold_rule_value(&pooled, tau), exact_expected_max(inst)))
}
