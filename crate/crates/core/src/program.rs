//! Occupation-measure programs for policy synthesis.
//!
//! Each program maximizes a guarantee `delta` such that every variable is
//! observed with probability at least `delta` and the expected reward is at
//! least `delta * E[max]`. Variables:
//!
//! * `alpha` - probability of reaching a state (adaptive programs) or a
//!   position of a chosen order (ordered programs),
//! * `beta`  - reach, see value `j` of the arriving variable, stop,
//! * `gamma` - the same but continue.
//!
//! The unreduced programs index states by subsets of `[n]` or by
//! permutations of `[n]`; the reduced ones pool the i.i.d. prefix and use
//! multisets / multiset orderings instead.

use std::fmt;

use crate::dist::{exact_expected_max, Instance};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpSolution, LpStatus, Relation, FEAS_TOL};
use crate::profile::{multiset_orderings, permutations, StateSpace, TypeProfile};

pub const MAX_PSLP_N: usize = 10;
pub const MAX_FOLP_N: usize = 7;
pub const MAX_REDUCED_TYPES: usize = 12;
pub const MAX_STATES: usize = 200_000;
pub const MAX_ORDERINGS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgramKind {
    Pslp,
    Rpslp,
    Folp,
    Rfolp,
}

impl fmt::Display for ProgramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pslp => "PSLP",
            Self::Rpslp => "rPSLP",
            Self::Folp => "FOLP",
            Self::Rfolp => "rFOLP",
        })
    }
}

/// First `beta` and `gamma` columns for one arrival; value `j` sits at offset `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrivalCols {
    pub beta: usize,
    pub gamma: usize,
}

#[derive(Debug, Clone)]
pub enum Layout {
    Adaptive {
        space: StateSpace,
        alpha: Vec<usize>,
        /// `[state][type]`, present when the type has positive count.
        arrivals: Vec<Vec<Option<ArrivalCols>>>,
    },
    Ordered {
        orders: Vec<Vec<usize>>,
        alpha: Vec<Vec<usize>>,
        arrivals: Vec<Vec<ArrivalCols>>,
    },
}

#[derive(Debug, Clone)]
pub struct PolicyProgram {
    pub kind: ProgramKind,
    pub lp: LinearProgram,
    pub profile: TypeProfile,
    pub expected_max: f64,
    pub delta: usize,
    pub layout: Layout,
}

impl PolicyProgram {
    /// Number of states (adaptive) or orderings (ordered).
    pub fn num_states(&self) -> usize {
        match &self.layout {
            Layout::Adaptive { space, .. } => space.len(),
            Layout::Ordered { orders, .. } => orders.len(),
        }
    }

    /// Solves the program. Ordered programs go through column generation,
    /// whose result is mapped back onto the full column set and verified.
    pub fn solve(&self) -> Result<SolvedProgram> {
        match self.layout {
            Layout::Ordered { .. } => crate::decompose::solve_ordered(self),
            Layout::Adaptive { .. } => self.solve_direct(),
        }
    }

    /// Solves the full program with the generic simplex backend.
    pub fn solve_direct(&self) -> Result<SolvedProgram> {
        let sol = solve_lp(&self.lp, FEAS_TOL)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Solver(sol.status));
        }
        Ok(SolvedProgram {
            delta: sol.values[self.delta],
            program: self.clone(),
            solution: sol,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolvedProgram {
    pub program: PolicyProgram,
    pub solution: LpSolution,
    pub delta: f64,
}

impl SolvedProgram {
    pub fn value(&self, col: usize) -> f64 {
        self.solution.values[col]
    }
}

fn ids(mask: usize, n: usize) -> String {
    let v: Vec<String> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| (i + 1).to_string()).collect();
    v.join(",")
}

/// Prophet-secretary program over subsets of `[n]`.
// state indices address several parallel tables at once
#[allow(clippy::needless_range_loop)]
pub fn build_pslp(inst: &Instance) -> Result<PolicyProgram> {
    let n = inst.n();
    if n > MAX_PSLP_N {
        return Err(Error::SizeGuard {
            what: "variables (PSLP)",
            size: n,
            limit: MAX_PSLP_N,
        });
    }
    let profile = TypeProfile::distinct(inst);
    let space = StateSpace::new(profile.multiplicities(), MAX_STATES)?;
    let full = (1usize << n) - 1;
    let expected_max = exact_expected_max(inst);
    let mut lp = LinearProgram::new();

    let alpha: Vec<usize> = (0..=full).map(|s| lp.add_var(format!("a[{}]", ids(s, n)), 1.0)).collect();
    let mut arrivals = vec![vec![None; n]; full + 1];
    for s in 1..=full {
        for i in (0..n).filter(|i| s >> i & 1 == 1) {
            let m = inst.dist(i).len();
            let beta = lp.num_vars();
            for j in 0..m {
                lp.add_var(format!("b[{},{}|{}]", i + 1, j, ids(s, n)), 1.0);
            }
            let gamma = lp.num_vars();
            for j in 0..m {
                lp.add_var(format!("g[{},{}|{}]", i + 1, j, ids(s, n)), 1.0);
            }
            arrivals[s][i] = Some(ArrivalCols { beta, gamma });
        }
    }
    let delta = lp.add_var("delta", 1.0);

    for i in 0..n {
        let mut row = vec![(delta, 1.0)];
        for s in (1..=full).filter(|s| s >> i & 1 == 1) {
            row.push((alpha[s], -1.0 / s.count_ones() as f64));
        }
        lp.add_constraint(format!("visit_{}", i + 1), row, Relation::Le, 0.0);
    }
    let mut reward = vec![(delta, expected_max)];
    for s in 1..=full {
        for i in (0..n).filter(|i| s >> i & 1 == 1) {
            let cols = arrivals[s][i].unwrap();
            for (j, &x) in inst.dist(i).support().iter().enumerate() {
                if x != 0.0 {
                    reward.push((cols.beta + j, -x));
                }
            }
        }
    }
    lp.add_constraint("reward", reward, Relation::Le, 0.0);
    lp.add_constraint("start", vec![(alpha[full], 1.0)], Relation::Eq, 1.0);
    for s in 0..full {
        let mut row = vec![(alpha[s], 1.0)];
        for i in (0..n).filter(|i| s >> i & 1 == 0) {
            let cols = arrivals[s | 1 << i][i].unwrap();
            for j in 0..inst.dist(i).len() {
                row.push((cols.gamma + j, -1.0));
            }
        }
        lp.add_constraint(format!("flow[{}]", ids(s, n)), row, Relation::Eq, 0.0);
    }
    for s in 1..=full {
        let size = s.count_ones() as f64;
        for i in (0..n).filter(|i| s >> i & 1 == 1) {
            let cols = arrivals[s][i].unwrap();
            for (j, &p) in inst.dist(i).probs().iter().enumerate() {
                lp.add_constraint(
                    format!("split[{},{}|{}]", i + 1, j, ids(s, n)),
                    vec![(cols.beta + j, 1.0), (cols.gamma + j, 1.0), (alpha[s], -p / size)],
                    Relation::Eq,
                    0.0,
                );
            }
        }
    }
    lp.set_objective(vec![(delta, 1.0)]);
    Ok(PolicyProgram {
        kind: ProgramKind::Pslp,
        lp,
        profile,
        expected_max,
        delta,
        layout: Layout::Adaptive { space, alpha, arrivals },
    })
}

fn check_roles(profile: &TypeProfile) -> Result<()> {
    if profile.num_types() > MAX_REDUCED_TYPES {
        return Err(Error::SizeGuard {
            what: "distinct roles",
            size: profile.num_types(),
            limit: MAX_REDUCED_TYPES,
        });
    }
    Ok(())
}

/// Prophet-secretary program over sub-multisets of the pooled role multiset.
pub fn build_rpslp(inst: &Instance) -> Result<PolicyProgram> {
    build_adaptive_reduced(&TypeProfile::pooled(inst), exact_expected_max(inst))
}

/// Reduced prophet-secretary program for an arbitrary role profile.
// state indices address several parallel tables at once
#[allow(clippy::needless_range_loop)]
pub fn build_adaptive_reduced(profile: &TypeProfile, expected_max: f64) -> Result<PolicyProgram> {
    check_roles(profile)?;
    let k = profile.num_types();
    let space = StateSpace::new(profile.multiplicities(), MAX_STATES)?;
    let full = profile.full_state();
    let mut lp = LinearProgram::new();

    let alpha: Vec<usize> = space.iter().map(|s| lp.add_var(format!("a[{s}]"), 1.0)).collect();
    let mut arrivals = vec![vec![None; k]; space.len()];
    for (idx, s) in space.iter().enumerate() {
        for t in s.support() {
            let m = profile.dist(t).len();
            let beta = lp.num_vars();
            for j in 0..m {
                lp.add_var(format!("b[{t},{j}|{s}]"), 1.0);
            }
            let gamma = lp.num_vars();
            for j in 0..m {
                lp.add_var(format!("g[{t},{j}|{s}]"), 1.0);
            }
            arrivals[idx][t] = Some(ArrivalCols { beta, gamma });
        }
    }
    let delta = lp.add_var("delta", 1.0);

    for t in 0..k {
        let mut row = vec![(delta, 1.0)];
        let mt = profile.multiplicity(t) as f64;
        for (idx, s) in space.iter().enumerate() {
            if s.contains(t) {
                row.push((alpha[idx], -(s.count(t) as f64) / (s.size() as f64 * mt)));
            }
        }
        lp.add_constraint(format!("visit_{t}"), row, Relation::Le, 0.0);
    }
    let mut reward = vec![(delta, expected_max)];
    for (idx, s) in space.iter().enumerate() {
        for t in s.support() {
            let cols = arrivals[idx][t].unwrap();
            for (j, &x) in profile.dist(t).support().iter().enumerate() {
                if x != 0.0 {
                    reward.push((cols.beta + j, -x));
                }
            }
        }
    }
    lp.add_constraint("reward", reward, Relation::Le, 0.0);
    lp.add_constraint("start", vec![(alpha[space.index(&full)], 1.0)], Relation::Eq, 1.0);
    for (idx, s) in space.iter().enumerate() {
        if s == full {
            continue;
        }
        let mut row = vec![(alpha[idx], 1.0)];
        for t in 0..k {
            if s.count(t) as usize >= profile.multiplicity(t) {
                continue;
            }
            let parent = space.index(&s.with(t));
            let cols = arrivals[parent][t].unwrap();
            for j in 0..profile.dist(t).len() {
                row.push((cols.gamma + j, -1.0));
            }
        }
        lp.add_constraint(format!("flow[{s}]"), row, Relation::Eq, 0.0);
    }
    for (idx, s) in space.iter().enumerate() {
        let size = s.size() as f64;
        for t in s.support() {
            let cols = arrivals[idx][t].unwrap();
            let weight = s.count(t) as f64 / size;
            for (j, &p) in profile.dist(t).probs().iter().enumerate() {
                lp.add_constraint(
                    format!("split[{t},{j}|{s}]"),
                    vec![(cols.beta + j, 1.0), (cols.gamma + j, 1.0), (alpha[idx], -weight * p)],
                    Relation::Eq,
                    0.0,
                );
            }
        }
    }
    lp.set_objective(vec![(delta, 1.0)]);
    Ok(PolicyProgram {
        kind: ProgramKind::Rpslp,
        lp,
        profile: profile.clone(),
        expected_max,
        delta,
        layout: Layout::Adaptive { space, alpha, arrivals },
    })
}

/// Free-order program over all permutations of `[n]`.
pub fn build_folp(inst: &Instance) -> Result<PolicyProgram> {
    let n = inst.n();
    if n > MAX_FOLP_N {
        return Err(Error::SizeGuard {
            what: "variables (FOLP)",
            size: n,
            limit: MAX_FOLP_N,
        });
    }
    let profile = TypeProfile::distinct(inst);
    let orders = permutations(n);
    let mut prog = build_ordered(&profile, orders, exact_expected_max(inst))?;
    prog.kind = ProgramKind::Folp;
    Ok(prog)
}

/// Free-order program over orderings of the pooled role multiset.
pub fn build_rfolp(inst: &Instance) -> Result<PolicyProgram> {
    build_ordered_reduced(&TypeProfile::pooled(inst), exact_expected_max(inst))
}

pub fn build_ordered_reduced(profile: &TypeProfile, expected_max: f64) -> Result<PolicyProgram> {
    check_roles(profile)?;
    let orders = multiset_orderings(profile.multiplicities(), MAX_ORDERINGS)?;
    build_ordered(profile, orders, expected_max)
}

fn build_ordered(profile: &TypeProfile, orders: Vec<Vec<usize>>, expected_max: f64) -> Result<PolicyProgram> {
    let n = profile.n();
    if orders.len().saturating_mul(n) > MAX_STATES {
        return Err(Error::SizeGuard {
            what: "order positions",
            size: orders.len() * n,
            limit: MAX_STATES,
        });
    }
    let mut lp = LinearProgram::new();
    let mut alpha = Vec::with_capacity(orders.len());
    let mut arrivals = Vec::with_capacity(orders.len());
    for (o, order) in orders.iter().enumerate() {
        let mut a_row = Vec::with_capacity(n);
        let mut arr_row = Vec::with_capacity(n);
        for (pos, &t) in order.iter().enumerate() {
            a_row.push(lp.add_var(format!("a[{},o{o}]", pos + 1), 1.0));
            let m = profile.dist(t).len();
            let beta = lp.num_vars();
            for j in 0..m {
                lp.add_var(format!("b[{},{j},o{o}]", pos + 1), 1.0);
            }
            let gamma = lp.num_vars();
            for j in 0..m {
                lp.add_var(format!("g[{},{j},o{o}]", pos + 1), 1.0);
            }
            arr_row.push(ArrivalCols { beta, gamma });
        }
        alpha.push(a_row);
        arrivals.push(arr_row);
    }
    let delta = lp.add_var("delta", 1.0);

    for t in 0..profile.num_types() {
        let mut row = vec![(delta, 1.0)];
        let mt = profile.multiplicity(t) as f64;
        for (o, order) in orders.iter().enumerate() {
            for (pos, _) in order.iter().enumerate().filter(|(_, &u)| u == t) {
                row.push((alpha[o][pos], -1.0 / mt));
            }
        }
        lp.add_constraint(format!("visit_{t}"), row, Relation::Le, 0.0);
    }
    let mut reward = vec![(delta, expected_max)];
    for (o, order) in orders.iter().enumerate() {
        for (pos, &t) in order.iter().enumerate() {
            for (j, &x) in profile.dist(t).support().iter().enumerate() {
                if x != 0.0 {
                    reward.push((arrivals[o][pos].beta + j, -x));
                }
            }
        }
    }
    lp.add_constraint("reward", reward, Relation::Le, 0.0);
    lp.add_constraint("start", alpha.iter().map(|a| (a[0], 1.0)).collect(), Relation::Eq, 1.0);
    for (o, order) in orders.iter().enumerate() {
        for pos in 1..n {
            let prev = arrivals[o][pos - 1];
            let mut row = vec![(alpha[o][pos], 1.0)];
            for j in 0..profile.dist(order[pos - 1]).len() {
                row.push((prev.gamma + j, -1.0));
            }
            lp.add_constraint(format!("chain[{},o{o}]", pos + 1), row, Relation::Eq, 0.0);
        }
        for (pos, &t) in order.iter().enumerate() {
            let cols = arrivals[o][pos];
            for (j, &p) in profile.dist(t).probs().iter().enumerate() {
                lp.add_constraint(
                    format!("split[{},{j},o{o}]", pos + 1),
                    vec![(cols.beta + j, 1.0), (cols.gamma + j, 1.0), (alpha[o][pos], -p)],
                    Relation::Eq,
                    0.0,
                );
            }
        }
    }
    lp.set_objective(vec![(delta, 1.0)]);
    Ok(PolicyProgram {
        kind: ProgramKind::Rfolp,
        lp,
        profile: profile.clone(),
        expected_max,
        delta,
        layout: Layout::Ordered { orders, alpha, arrivals },
    })
}

/// Reduced program for the given arrival model.
pub fn build_reduced(inst: &Instance, model: crate::ModelKind) -> Result<PolicyProgram> {
    match model {
        crate::ModelKind::ProphetSecretary => build_rpslp(inst),
        crate::ModelKind::FreeOrder => build_rfolp(inst),
        crate::ModelKind::FixedOrder => Err(Error::Parameter("no program for the fixed-order model".into())),
    }
}
