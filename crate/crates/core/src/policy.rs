//! Executable randomized stopping policies.
//!
//! A policy reads an arriving variable's *observed* value (the raw
//! realization after the optional preprocessing chain: jitter, lower-tail
//! cutoff, Bernoulli thinning), first applies the tail rule (forced
//! acceptance above a per-role threshold) and otherwise looks up an
//! acceptance probability indexed by the current state, the arriving role and
//! the value's position in that role's support. The reward of stopping is
//! always the raw realization.

use rand::Rng;

use crate::dist::{DiscreteDistribution, ModelKind};
use crate::error::{Error, Result};
use crate::lp::FEAS_TOL;
use crate::profile::{MultisetState, StateSpace, TypeProfile};
use crate::program::{Layout, ProgramKind, SolvedProgram};
use crate::reduction::Jitter;

/// Weights below this are treated as zero when reading order probabilities.
const WEIGHT_TOL: f64 = 1e-12;

/// Transformation applied to a raw realization before the decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    pub jitter: Option<Jitter>,
    /// Observed values `<= cutoff` are replaced by 0.
    pub cutoff: Option<f64>,
    /// Probability that the observation survives the Bernoulli filter.
    pub keep: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            jitter: None,
            cutoff: None,
            keep: 1.0,
        }
    }
}

impl Preprocess {
    pub fn is_identity(&self) -> bool {
        self.jitter.is_none() && self.cutoff.is_none() && self.keep >= 1.0
    }

    /// Samples one observation of the raw value `x`.
    pub fn observe<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let mut y = x;
        if let Some(j) = &self.jitter {
            y = j.apply(y, rng);
        }
        y = self.cut(y);
        if self.keep < 1.0 && rng.random::<f64>() >= self.keep {
            y = 0.0;
        }
        y
    }

    fn cut(&self, y: f64) -> f64 {
        match self.cutoff {
            Some(t) if y <= t => 0.0,
            _ => y,
        }
    }

    /// Exact joint law of (raw reward, observed value) for a raw distribution.
    pub fn law(&self, raw: &DiscreteDistribution) -> Vec<Observation> {
        let mut out = Vec::new();
        for (x, p) in raw.iter() {
            match &self.jitter {
                Some(j) => {
                    let q = p / j.grid as f64;
                    for k in 1..=j.grid {
                        out.push(Observation {
                            reward: x,
                            observed: self.cut(j.shift(x, k)),
                            prob: q,
                        });
                    }
                }
                None => out.push(Observation {
                    reward: x,
                    observed: self.cut(x),
                    prob: p,
                }),
            }
        }
        if self.keep < 1.0 {
            let dropped: Vec<Observation> = out
                .iter()
                .map(|o| Observation {
                    observed: 0.0,
                    prob: o.prob * (1.0 - self.keep),
                    ..*o
                })
                .collect();
            out.iter_mut().for_each(|o| o.prob *= self.keep);
            out.extend(dropped);
        }
        out.retain(|o| o.prob > 0.0);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub reward: f64,
    pub observed: f64,
    pub prob: f64,
}

/// One free-order branch: a sequence of roles with per-position acceptance.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderBranch {
    pub order: Vec<usize>,
    pub weight: f64,
    /// `accept[pos][j]` for value index `j` of the role at `pos`.
    pub accept: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum DecisionRule {
    /// `accept[state][role][j]`; the inner vector is empty for roles absent from the state.
    Adaptive {
        space: StateSpace,
        accept: Vec<Vec<Vec<f64>>>,
    },
    Ordered { branches: Vec<OrderBranch> },
}

/// Where in the run a decision is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    /// Index of the remaining-role multiset in the policy's state space.
    State(usize),
    Position { branch: usize, pos: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub accept: f64,
    /// The observed value was not in the role's support; a threshold
    /// fallback was used.
    pub off_support: bool,
}

#[derive(Debug, Clone)]
pub struct RandomizedPolicy {
    pub model: ModelKind,
    pub profile: TypeProfile,
    pub rule: DecisionRule,
    /// Per-role tail threshold; `INFINITY` disables the rule.
    pub tail: Vec<f64>,
    pub preprocess: Preprocess,
}

impl RandomizedPolicy {
    /// Adaptive policy from explicit tables `accept[state][role][j]`.
    pub fn adaptive(model: ModelKind, profile: TypeProfile, accept: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if model == ModelKind::FreeOrder {
            return Err(Error::Mismatch("free-order policies need an order distribution".into()));
        }
        let space = StateSpace::new(profile.multiplicities(), usize::MAX)?;
        if accept.len() != space.len() {
            return Err(Error::Mismatch(format!("{} state tables for {} states", accept.len(), space.len())));
        }
        for (idx, tables) in accept.iter().enumerate() {
            let s = space.state(idx);
            for (t, table) in tables.iter().enumerate() {
                let expect = if s.contains(t) { profile.dist(t).len() } else { 0 };
                if table.len() != expect {
                    return Err(Error::Mismatch(format!("table for role {t} in state {s} has wrong length")));
                }
                check_probs(table)?;
            }
        }
        Ok(Self {
            tail: vec![f64::INFINITY; profile.num_types()],
            model,
            profile,
            rule: DecisionRule::Adaptive { space, accept },
            preprocess: Preprocess::default(),
        })
    }

    /// Adaptive policy whose acceptance depends only on state size and value:
    /// `f(remaining, role, value) -> probability`.
    pub fn adaptive_from_fn(
        model: ModelKind,
        profile: TypeProfile,
        f: impl Fn(&MultisetState, usize, f64) -> f64,
    ) -> Result<Self> {
        let space = StateSpace::new(profile.multiplicities(), usize::MAX)?;
        let accept = space
            .iter()
            .map(|s| {
                (0..profile.num_types())
                    .map(|t| {
                        if s.contains(t) {
                            profile.dist(t).support().iter().map(|&x| f(&s, t, x)).collect()
                        } else {
                            Vec::new()
                        }
                    })
                    .collect()
            })
            .collect();
        Self::adaptive(model, profile, accept)
    }

    /// Accepts every arrival with the same probability.
    pub fn constant(model: ModelKind, profile: TypeProfile, p: f64) -> Result<Self> {
        Self::adaptive_from_fn(model, profile, |_, _, _| p)
    }

    /// Free-order policy from explicit branches.
    pub fn ordered(profile: TypeProfile, branches: Vec<OrderBranch>) -> Result<Self> {
        let total: f64 = branches.iter().map(|b| b.weight).sum();
        if branches.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Mismatch(format!("order weights sum to {total}")));
        }
        for b in &branches {
            let mut counts = vec![0usize; profile.num_types()];
            for &t in &b.order {
                *counts.get_mut(t).ok_or_else(|| Error::Mismatch(format!("unknown role {t}")))? += 1;
            }
            if counts != profile.multiplicities() || b.accept.len() != b.order.len() {
                return Err(Error::Mismatch("order is not an arrangement of the role multiset".into()));
            }
            for (pos, &t) in b.order.iter().enumerate() {
                if b.accept[pos].len() != profile.dist(t).len() {
                    return Err(Error::Mismatch(format!("position {pos} table has wrong length")));
                }
                check_probs(&b.accept[pos])?;
            }
        }
        Ok(Self {
            model: ModelKind::FreeOrder,
            tail: vec![f64::INFINITY; profile.num_types()],
            profile,
            rule: DecisionRule::Ordered { branches },
            preprocess: Preprocess::default(),
        })
    }

    pub fn with_preprocess(mut self, pre: Preprocess) -> Self {
        self.preprocess = pre;
        self
    }

    /// Forces acceptance of any observed value strictly above the role's threshold.
    pub fn attach_tail_rule(mut self, thresholds: &[f64]) -> Result<Self> {
        if thresholds.len() != self.profile.num_types() {
            return Err(Error::Mismatch(format!(
                "{} thresholds for {} roles",
                thresholds.len(),
                self.profile.num_types()
            )));
        }
        if thresholds.iter().any(|&m| m.is_nan() || m < 0.0) {
            return Err(Error::Parameter("tail thresholds must be non-negative".into()));
        }
        self.tail = thresholds.to_vec();
        Ok(self)
    }

    /// Number of original variables the policy expects.
    pub fn n(&self) -> usize {
        self.profile.n()
    }

    fn table(&self, ctx: Context, t: usize) -> Result<&[f64]> {
        let table = match (&self.rule, ctx) {
            (DecisionRule::Adaptive { accept, .. }, Context::State(idx)) => accept.get(idx).and_then(|s| s.get(t)),
            (DecisionRule::Ordered { branches }, Context::Position { branch, pos }) => {
                branches.get(branch).and_then(|b| b.accept.get(pos).filter(|_| b.order[pos] == t))
            }
            _ => None,
        };
        match table {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(Error::PolicyCoverage(format!("role {t} at {ctx:?}"))),
        }
    }

    /// Acceptance probability of observed value `y` from role `t`.
    pub fn decide(&self, ctx: Context, t: usize, y: f64) -> Result<Decision> {
        if y > self.tail[t] {
            return Ok(Decision {
                accept: 1.0,
                off_support: false,
            });
        }
        let table = self.table(ctx, t)?;
        let d = self.profile.dist(t);
        Ok(match d.index_of(y) {
            Some(j) => Decision {
                accept: table[j],
                off_support: false,
            },
            None => {
                let cut = table.iter().position(|&p| p >= 0.5).map(|j| d.support()[j]);
                Decision {
                    accept: if cut.is_some_and(|c| y > c) { 1.0 } else { 0.0 },
                    off_support: true,
                }
            }
        })
    }

    /// Normalized order weights (free-order policies only).
    pub fn order_weights(&self) -> Option<Vec<f64>> {
        match &self.rule {
            DecisionRule::Ordered { branches } => Some(branches.iter().map(|b| b.weight).collect()),
            DecisionRule::Adaptive { .. } => None,
        }
    }
}

fn check_probs(table: &[f64]) -> Result<()> {
    if table.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Mismatch("acceptance probabilities must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Conditional acceptance probability `beta / reach`, with the unreachable
/// convention (accept) and feasibility checks.
fn ratio(beta: f64, reach: f64, tol: f64) -> Result<f64> {
    if beta < -tol || beta > reach + tol {
        return Err(Error::SolverInconsistency(format!("stop mass {beta:e} outside [0, {reach:e}]")));
    }
    Ok(if reach <= tol { 1.0 } else { (beta / reach).clamp(0.0, 1.0) })
}

/// Reads acceptance probabilities off an optimal program solution.
///
/// The last arrival of every run accepts unconditionally: stopping there
/// never costs visits and the program leaves stop mass on zero rewards
/// undetermined.
pub fn extract_policy(solved: &SolvedProgram) -> Result<RandomizedPolicy> {
    let prog = &solved.program;
    let profile = prog.profile.clone();
    let v = |c: usize| solved.value(c);
    let tol = FEAS_TOL;
    match &prog.layout {
        Layout::Adaptive { space, alpha, arrivals } => {
            let mut accept = Vec::with_capacity(space.len());
            for (idx, s) in space.iter().enumerate() {
                let size = s.size();
                let mut tables = vec![Vec::new(); profile.num_types()];
                for t in s.support() {
                    let cols = arrivals[idx][t].expect("arrival columns for present role");
                    let w = v(alpha[idx]) * s.count(t) as f64 / size as f64;
                    let mut table = Vec::with_capacity(profile.dist(t).len());
                    for (j, &p) in profile.dist(t).probs().iter().enumerate() {
                        let r = ratio(v(cols.beta + j), w * p, tol)?;
                        table.push(if size == 1 { 1.0 } else { r });
                    }
                    tables[t] = table;
                }
                accept.push(tables);
            }
            let model = match prog.kind {
                ProgramKind::Pslp | ProgramKind::Rpslp => ModelKind::ProphetSecretary,
                _ => unreachable!("adaptive layout comes from secretary programs"),
            };
            RandomizedPolicy::adaptive(model, profile, accept)
        }
        Layout::Ordered { orders, alpha, arrivals } => {
            let total: f64 = alpha.iter().map(|a| v(a[0]).max(0.0)).sum();
            let mut branches = Vec::new();
            for (o, order) in orders.iter().enumerate() {
                let w0 = v(alpha[o][0]);
                if w0 <= WEIGHT_TOL {
                    continue;
                }
                let last = order.len() - 1;
                let mut accept = Vec::with_capacity(order.len());
                for (pos, &t) in order.iter().enumerate() {
                    let reach = v(alpha[o][pos]);
                    let mut table = Vec::with_capacity(profile.dist(t).len());
                    for (j, &p) in profile.dist(t).probs().iter().enumerate() {
                        let r = ratio(v(arrivals[o][pos].beta + j), reach * p, tol)?;
                        table.push(if pos == last { 1.0 } else { r });
                    }
                    accept.push(table);
                }
                branches.push(OrderBranch {
                    order: order.clone(),
                    weight: w0 / total,
                    accept,
                });
            }
            RandomizedPolicy::ordered(profile, branches)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Instance;
    use crate::program::{build_folp, build_pslp, build_rpslp};

    fn fair() -> DiscreteDistribution {
        DiscreteDistribution::two_point(0.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn two_fair_coins_first_arrival() {
        let inst = Instance::iid(fair(), 2).unwrap();
        for solved in [build_pslp(&inst).unwrap().solve().unwrap(), build_rpslp(&inst).unwrap().solve().unwrap()] {
            let pol = extract_policy(&solved).unwrap();
            let DecisionRule::Adaptive { space, .. } = &pol.rule else {
                panic!("adaptive expected")
            };
            let full = space.index(&pol.profile.full_state());
            let d = pol.decide(Context::State(full), 0, 1.0).unwrap();
            assert!((d.accept - 4.0 / 7.0).abs() < 1e-4, "{}", d.accept);
        }
    }

    #[test]
    fn deterministic_variable_accepts() {
        let inst = Instance::independent(vec![DiscreteDistribution::point_mass(1.0).unwrap()]).unwrap();
        let pol = extract_policy(&build_folp(&inst).unwrap().solve().unwrap()).unwrap();
        let d = pol.decide(Context::Position { branch: 0, pos: 0 }, 0, 1.0).unwrap();
        assert_eq!(d.accept, 1.0);
    }

    #[test]
    fn free_order_weights_sum_to_one() {
        let inst = Instance::independent(vec![
            DiscreteDistribution::point_mass(1.0).unwrap(),
            DiscreteDistribution::two_point(0.0, 2.0, 0.5).unwrap(),
        ])
        .unwrap();
        let pol = extract_policy(&build_folp(&inst).unwrap().solve().unwrap()).unwrap();
        let total: f64 = pol.order_weights().unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tail_rule_and_fallback() {
        let inst = Instance::iid(fair(), 2).unwrap();
        let pol = RandomizedPolicy::constant(ModelKind::ProphetSecretary, TypeProfile::pooled(&inst), 0.0).unwrap();
        let ctx = Context::State(2);
        assert_eq!(pol.decide(ctx, 0, 1.0).unwrap().accept, 0.0);
        let pol = pol.attach_tail_rule(&[0.0]).unwrap();
        assert_eq!(pol.decide(ctx, 0, 1.0).unwrap().accept, 1.0);
        assert_eq!(pol.decide(ctx, 0, 0.0).unwrap().accept, 0.0);

        let pol = RandomizedPolicy::adaptive_from_fn(ModelKind::ProphetSecretary, TypeProfile::pooled(&inst), |_, _, x| x).unwrap();
        let d = pol.decide(ctx, 0, 0.5).unwrap();
        assert!(d.off_support);
        assert_eq!(d.accept, 0.0);
        assert_eq!(pol.decide(ctx, 0, 1.5).unwrap().accept, 1.0);
    }

    #[test]
    fn preprocess_law_matches_thinning() {
        let pre = Preprocess {
            keep: 0.5,
            ..Preprocess::default()
        };
        let law = pre.law(&fair());
        let above: f64 = law.iter().filter(|o| o.observed > 0.5).map(|o| o.prob).sum();
        assert!((above - 0.25).abs() < 1e-15);
        let total: f64 = law.iter().map(|o| o.prob).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}
