//! Variable roles ("types") and the multiset state space built on them.
//!
//! A type is a distribution together with a multiplicity: the pooled i.i.d.
//! prefix of an instance becomes one type with multiplicity `s`, every other
//! variable its own type. States of the adaptive programs are multisets of
//! remaining types, stored as a count per type.

use std::fmt;

use crate::dist::{DiscreteDistribution, Instance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TypeProfile {
    dists: Vec<DiscreteDistribution>,
    multiplicity: Vec<usize>,
    var_type: Vec<usize>,
}

impl TypeProfile {
    pub fn new(dists: Vec<DiscreteDistribution>, var_type: Vec<usize>) -> Result<Self> {
        let mut multiplicity = vec![0; dists.len()];
        for &t in &var_type {
            if t >= dists.len() {
                return Err(Error::InvalidInstance(format!("variable mapped to missing type {t}")));
            }
            multiplicity[t] += 1;
        }
        if multiplicity.contains(&0) {
            return Err(Error::InvalidInstance("every type needs at least one variable".into()));
        }
        Ok(Self {
            dists,
            multiplicity,
            var_type,
        })
    }

    /// One type per variable (the unreduced programs).
    pub fn distinct(inst: &Instance) -> Self {
        let n = inst.n();
        Self {
            dists: inst.dists().to_vec(),
            multiplicity: vec![1; n],
            var_type: (0..n).collect(),
        }
    }

    /// The i.i.d. prefix pooled into type 0, every later variable its own type.
    pub fn pooled(inst: &Instance) -> Self {
        let s = inst.num_iid_prefix();
        if s <= 1 {
            return Self::distinct(inst);
        }
        let n = inst.n();
        let mut dists = vec![inst.dist(0).clone()];
        dists.extend(inst.dists()[s..].iter().cloned());
        let mut multiplicity = vec![s];
        multiplicity.extend(std::iter::repeat_n(1, n - s));
        let var_type = (0..n).map(|i| if i < s { 0 } else { i - s + 1 }).collect();
        Self {
            dists,
            multiplicity,
            var_type,
        }
    }

    pub fn num_types(&self) -> usize {
        self.dists.len()
    }

    pub fn n(&self) -> usize {
        self.var_type.len()
    }

    pub fn dist(&self, t: usize) -> &DiscreteDistribution {
        &self.dists[t]
    }

    pub fn dists(&self) -> &[DiscreteDistribution] {
        &self.dists
    }

    pub fn multiplicity(&self, t: usize) -> usize {
        self.multiplicity[t]
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicity
    }

    pub fn type_of(&self, var: usize) -> usize {
        self.var_type[var]
    }

    pub fn var_types(&self) -> &[usize] {
        &self.var_type
    }

    pub fn full_state(&self) -> MultisetState {
        MultisetState(self.multiplicity.iter().map(|&m| m as u32).collect())
    }

    /// The instance spanned by this profile, variables in original order.
    pub fn instance(&self) -> Result<Instance> {
        let dists = self.var_type.iter().map(|&t| self.dists[t].clone()).collect();
        Instance::independent(dists)
    }
}

/// Remaining multiplicity per type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultisetState(pub Vec<u32>);

impl MultisetState {
    pub fn size(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    pub fn count(&self, t: usize) -> u32 {
        self.0[t]
    }

    pub fn contains(&self, t: usize) -> bool {
        self.0[t] > 0
    }

    pub fn without(&self, t: usize) -> Self {
        let mut next = self.clone();
        next.0[t] -= 1;
        next
    }

    pub fn with(&self, t: usize) -> Self {
        let mut next = self.clone();
        next.0[t] += 1;
        next
    }

    /// Types with positive count.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &c)| c > 0).map(|(t, _)| t)
    }
}

impl fmt::Display for MultisetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(".")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// All sub-multisets of a full state, indexed in mixed radix.
#[derive(Debug, Clone)]
pub struct StateSpace {
    radix: Vec<usize>,
    stride: Vec<usize>,
    len: usize,
}

impl StateSpace {
    pub fn new(multiplicity: &[usize], limit: usize) -> Result<Self> {
        let mut stride = Vec::with_capacity(multiplicity.len());
        let mut len: usize = 1;
        for &m in multiplicity {
            stride.push(len);
            len = len.checked_mul(m + 1).filter(|&l| l <= limit).ok_or(Error::SizeGuard {
                what: "states",
                size: usize::MAX,
                limit,
            })?;
        }
        Ok(Self {
            radix: multiplicity.iter().map(|m| m + 1).collect(),
            stride,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self, s: &MultisetState) -> usize {
        s.0.iter().zip(&self.stride).map(|(&c, &w)| c as usize * w).sum()
    }

    pub fn state(&self, mut idx: usize) -> MultisetState {
        let mut counts = Vec::with_capacity(self.radix.len());
        for &r in &self.radix {
            counts.push((idx % r) as u32);
            idx /= r;
        }
        MultisetState(counts)
    }

    pub fn stride(&self, t: usize) -> usize {
        self.stride[t]
    }

    pub fn iter(&self) -> impl Iterator<Item = MultisetState> + '_ {
        (0..self.len).map(|i| self.state(i))
    }
}

/// Distinct arrangements of the multiset with the given multiplicities, in
/// lexicographic order of the type sequence.
pub fn multiset_orderings(multiplicity: &[usize], limit: usize) -> Result<Vec<Vec<usize>>> {
    let mut seq: Vec<usize> = multiplicity
        .iter()
        .enumerate()
        .flat_map(|(t, &m)| std::iter::repeat_n(t, m))
        .collect();
    let mut out = vec![seq.clone()];
    while next_permutation(&mut seq) {
        if out.len() >= limit {
            return Err(Error::SizeGuard {
                what: "orderings",
                size: out.len() + 1,
                limit,
            });
        }
        out.push(seq.clone());
    }
    Ok(out)
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut seq: Vec<usize> = (0..n).collect();
    let mut out = vec![seq.clone()];
    while next_permutation(&mut seq) {
        out.push(seq.clone());
    }
    out
}

pub(crate) fn next_permutation(seq: &mut [usize]) -> bool {
    if seq.len() < 2 {
        return false;
    }
    let mut i = seq.len() - 1;
    while i > 0 && seq[i - 1] >= seq[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = seq.len() - 1;
    while seq[j] <= seq[i - 1] {
        j -= 1;
    }
    seq.swap(i - 1, j);
    seq[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_space_counts() {
        let space = StateSpace::new(&[2, 1], 1000).unwrap();
        assert_eq!(space.len(), 6);
        for (k, s) in space.iter().enumerate() {
            assert_eq!(space.index(&s), k);
        }
        assert!(StateSpace::new(&[100, 100, 100], 1000).is_err());
    }

    #[test]
    fn orderings() {
        assert_eq!(multiset_orderings(&[2, 1], 100).unwrap(), vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
        assert_eq!(multiset_orderings(&[4], 100).unwrap().len(), 1);
        assert_eq!(permutations(4).len(), 24);
        assert!(multiset_orderings(&[1; 6], 100).is_err());
    }

    #[test]
    fn pooled_profile_layout() {
        let g = DiscreteDistribution::two_point(0.0, 1.0, 0.5).unwrap();
        let h = DiscreteDistribution::point_mass(0.5).unwrap();
        let inst = Instance::new(vec![g.clone(), g.clone(), h], 2).unwrap();
        let p = TypeProfile::pooled(&inst);
        assert_eq!(p.multiplicities(), &[2, 1]);
        assert_eq!(p.var_types(), &[0, 0, 1]);
        assert_eq!(p.instance().unwrap().dists(), inst.dists());
        assert_eq!(TypeProfile::distinct(&inst).multiplicities(), &[1, 1, 1]);
    }
}
