//! Finite-support distributions and instances.
//!
//! A [`DiscreteDistribution`] is a strictly increasing list of non-negative
//! support points with attached probabilities. Everything downstream (the
//! estimators, the LPs, the oracles) works on these, so the arithmetic here is
//! kept exact up to float rounding: merged grids are sorted unions with exact
//! value equality, never epsilon-merged.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance used when validating that probabilities sum to one.
pub const MASS_TOL: f64 = 1e-9;

/// Probabilities below this after CDF differencing are rounding noise.
const DIFF_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
    cum: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "support has {} points but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        for (k, &v) in support.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidDistribution(format!("support value {v} is not a finite non-negative real")));
            }
            if k > 0 && support[k - 1] >= v {
                return Err(Error::InvalidDistribution("support must be strictly increasing".into()));
            }
        }
        for &p in &probs {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDistribution(format!("probability {p} outside [0, 1]")));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self::from_parts(support, probs))
    }

    /// Builds from `(value, prob)` pairs in any order; duplicate values are merged.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let mut sorted = pairs.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut probs: Vec<f64> = Vec::with_capacity(sorted.len());
        for (v, p) in sorted {
            if support.last() == Some(&v) {
                *probs.last_mut().unwrap() += p;
            } else {
                support.push(v);
                probs.push(p);
            }
        }
        Self::new(support, probs)
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        Self::new(vec![value], vec![1.0])
    }

    /// Two-point law: `hi` with probability `p`, `lo` otherwise.
    pub fn two_point(lo: f64, hi: f64, p: f64) -> Result<Self> {
        if p <= 0.0 {
            return Self::point_mass(lo);
        }
        if p >= 1.0 {
            return Self::point_mass(hi);
        }
        Self::new(vec![lo, hi], vec![1.0 - p, p])
    }

    fn from_parts(support: Vec<f64>, probs: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cum = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { support, probs, cum }
    }

    /// Builds a distribution from CDF values on a strictly increasing grid by
    /// differencing. Tiny negative or sub-`1e-15` differences are clamped to
    /// zero, zero-mass points dropped, and the rest renormalized.
    pub fn from_cdf_grid(grid: &[f64], cdf: &[f64]) -> Result<Self> {
        debug_assert_eq!(grid.len(), cdf.len());
        let mut support = Vec::with_capacity(grid.len());
        let mut probs = Vec::with_capacity(grid.len());
        let mut prev = 0.0;
        for (&x, &c) in grid.iter().zip(cdf) {
            let d = c - prev;
            prev = c.max(prev);
            if d > DIFF_FLOOR {
                support.push(x);
                probs.push(d);
            }
        }
        if support.is_empty() {
            return Err(Error::InvalidDistribution("CDF grid carries no mass".into()));
        }
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        Ok(Self::from_parts(support, probs))
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn max_value(&self) -> f64 {
        *self.support.last().unwrap()
    }

    /// Index of `x` in the support, if it is exactly a support point.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.support.binary_search_by(|v| v.total_cmp(&x)).ok()
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|&v| v <= x);
        if k == 0 {
            0.0
        } else if k == self.len() {
            1.0
        } else {
            self.cum[k - 1]
        }
    }

    /// `P(X > x)`.
    pub fn tail(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|&v| v <= x);
        self.probs[k..].iter().sum()
    }

    pub fn mass_at(&self, x: f64) -> f64 {
        self.index_of(x).map_or(0.0, |k| self.probs[k])
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(v, p)| v * p).sum()
    }

    /// `E[X 1{X > tau}]`.
    pub fn mean_above(&self, tau: f64) -> f64 {
        self.iter().filter(|&(v, _)| v > tau).map(|(v, p)| v * p).sum()
    }

    /// `E[max(X, c)]`.
    pub fn expected_max_with(&self, c: f64) -> f64 {
        self.iter().map(|(v, p)| v.max(c) * p).sum()
    }

    /// Values `<= cutoff` are mapped to 0 (the law of `X 1{X > cutoff}`).
    pub fn truncate_below(&self, cutoff: f64) -> Self {
        self.relocate_to_zero(|v| v <= cutoff)
    }

    /// Values `> cap` are mapped to 0 (the law of `X 1{X <= cap}`).
    pub fn censor_above(&self, cap: f64) -> Self {
        self.relocate_to_zero(|v| v > cap)
    }

    fn relocate_to_zero(&self, moved: impl Fn(f64) -> bool) -> Self {
        let mut zero = 0.0;
        let mut support = vec![0.0];
        let mut probs = vec![0.0];
        for (v, p) in self.iter() {
            if v == 0.0 || moved(v) {
                zero += p;
            } else {
                support.push(v);
                probs.push(p);
            }
        }
        probs[0] = zero;
        if zero == 0.0 {
            support.remove(0);
            probs.remove(0);
        }
        Self::from_parts(support, probs)
    }

    /// Mixture that keeps `X` with probability `keep` and is 0 otherwise,
    /// i.e. the law with `1 - F* = keep (1 - F)`.
    pub fn thinned(&self, keep: f64) -> Self {
        let pairs: Vec<(f64, f64)> = std::iter::once((0.0, 1.0 - keep))
            .chain(self.iter().map(|(v, p)| (v, p * keep)))
            .collect();
        let mut support: Vec<f64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        let mut sorted = pairs;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (v, p) in sorted {
            if support.last() == Some(&v) {
                *probs.last_mut().unwrap() += p;
            } else if p > 0.0 || v == 0.0 {
                support.push(v);
                probs.push(p);
            }
        }
        if probs[0] == 0.0 && support[0] == 0.0 && support.len() > 1 {
            support.remove(0);
            probs.remove(0);
        }
        Self::from_parts(support, probs)
    }

    /// True iff `P(X = 0) >= 1 - eps`.
    pub fn is_eps_small(&self, eps: f64) -> bool {
        self.mass_at(0.0) >= 1.0 - eps
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let k = self.cum.partition_point(|&c| c <= u);
        self.support[k.min(self.len() - 1)]
    }
}

impl fmt::Display for DiscreteDistribution {
    /// One instance-file line: `m v1 p1 ... vm pm`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.len())?;
        for (v, p) in self.iter() {
            write!(f, " {v:?} {p:?}")?;
        }
        Ok(())
    }
}

impl FromStr for DiscreteDistribution {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut tokens = line.split_whitespace();
        let m: usize = tokens
            .next()
            .ok_or_else(|| Error::InvalidDistribution("empty line".into()))?
            .parse()
            .map_err(|e| Error::InvalidDistribution(format!("bad support size: {e}")))?;
        let nums: Vec<f64> = tokens
            .map(|t| t.parse::<f64>().map_err(|e| Error::InvalidDistribution(format!("bad number {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if nums.len() != 2 * m {
            return Err(Error::InvalidDistribution(format!("expected {} numbers after m={m}, found {}", 2 * m, nums.len())));
        }
        let support = nums.iter().step_by(2).copied().collect();
        let probs = nums.iter().skip(1).step_by(2).copied().collect();
        Self::new(support, probs)
    }
}

/// Arrival model of the stopping problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Uniformly random arrival order.
    ProphetSecretary,
    /// The gambler picks the order.
    FreeOrder,
    /// Variables arrive in index order.
    FixedOrder,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ps" | "prophetsecretary" | "secretary" => Ok(Self::ProphetSecretary),
            "fo" | "freeorder" => Ok(Self::FreeOrder),
            "fixed" | "fixedorder" => Ok(Self::FixedOrder),
            _ => Err(Error::Parameter(format!("unknown model {s:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ProphetSecretary => "secretary",
            Self::FreeOrder => "free-order",
            Self::FixedOrder => "fixed-order",
        })
    }
}

/// An ordered list of independent variables. The first `num_iid_prefix`
/// entries are bitwise identical and may be treated as one pooled role.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    dists: Vec<DiscreteDistribution>,
    num_iid_prefix: usize,
}

impl Instance {
    pub fn new(dists: Vec<DiscreteDistribution>, num_iid_prefix: usize) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::InvalidInstance("instance needs at least one variable".into()));
        }
        if num_iid_prefix > dists.len() {
            return Err(Error::InvalidInstance(format!(
                "i.i.d. prefix {num_iid_prefix} longer than the instance ({})",
                dists.len()
            )));
        }
        if let Some(first) = dists.first() {
            if dists[..num_iid_prefix].iter().any(|d| d != first) {
                return Err(Error::InvalidInstance("i.i.d. prefix entries are not identical".into()));
            }
        }
        Ok(Self { dists, num_iid_prefix })
    }

    /// Instance with no declared symmetry.
    pub fn independent(dists: Vec<DiscreteDistribution>) -> Result<Self> {
        Self::new(dists, 0)
    }

    pub fn iid(dist: DiscreteDistribution, n: usize) -> Result<Self> {
        Self::new(vec![dist; n], n)
    }

    pub fn n(&self) -> usize {
        self.dists.len()
    }

    pub fn num_iid_prefix(&self) -> usize {
        self.num_iid_prefix
    }

    pub fn dists(&self) -> &[DiscreteDistribution] {
        &self.dists
    }

    pub fn dist(&self, i: usize) -> &DiscreteDistribution {
        &self.dists[i]
    }

    /// Parses the line-oriented instance format: `n s`, then one
    /// distribution line per variable.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| crate::error::parse_err(1, "missing header"))?;
        let mut head = header.split_whitespace();
        let n: usize = head
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| crate::error::parse_err(1, "header must be `n s`"))?;
        let s: usize = head
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| crate::error::parse_err(1, "header must be `n s`"))?;
        let mut dists = Vec::with_capacity(n);
        for (lineno, line) in lines {
            let d: DiscreteDistribution = line.parse().map_err(|e| crate::error::parse_err(lineno + 1, e))?;
            dists.push(d);
        }
        if dists.len() != n {
            return Err(crate::error::parse_err(1, format!("header declares {n} variables, found {}", dists.len())));
        }
        Self::new(dists, s)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n(), self.num_iid_prefix);
        for d in &self.dists {
            out.push_str(&d.to_string());
            out.push('\n');
        }
        out
    }
}

/// Sorted union of all support points, with exact value equality.
pub fn merged_support<'a>(dists: impl IntoIterator<Item = &'a DiscreteDistribution>) -> Vec<f64> {
    let mut grid: Vec<f64> = dists.into_iter().flat_map(|d| d.support().iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// `E[max_i X_i]` from the CDF of the maximum on the merged support.
pub fn expected_max_of(dists: &[DiscreteDistribution]) -> f64 {
    let grid = merged_support(dists);
    let mut prev = 0.0;
    let mut total = 0.0;
    for x in grid {
        let h: f64 = dists.iter().map(|d| d.cdf(x)).product();
        total += x * (h - prev);
        prev = h;
    }
    total
}

pub fn exact_expected_max(inst: &Instance) -> f64 {
    expected_max_of(inst.dists())
}

/// The distribution whose CDF is `(prod_i F_i)^(1/s)` with `s = dists.len()`.
/// The maximum of `s` independent draws from it has the same law as the
/// maximum of one draw from each input.
pub fn geometric_mean_cdf(dists: &[DiscreteDistribution]) -> Result<DiscreteDistribution> {
    if dists.is_empty() {
        return Err(Error::Parameter("geometric mean of zero distributions".into()));
    }
    let s = dists.len() as f64;
    let grid = merged_support(dists);
    let cdf: Vec<f64> = grid
        .iter()
        .map(|&x| dists.iter().map(|d| d.cdf(x)).product::<f64>().powf(1.0 / s))
        .collect();
    DiscreteDistribution::from_cdf_grid(&grid, &cdf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d(pairs: &[(f64, f64)]) -> DiscreteDistribution {
        DiscreteDistribution::from_pairs(pairs).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let fair = d(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(fair.cdf(0.0), 0.5);
        assert_eq!(fair.cdf(-1.0), 0.0);
        assert_eq!(d(&[(0.0, 0.9), (10.0, 0.1)]).cdf(10.0), 1.0);
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(DiscreteDistribution::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![-1.0], vec![1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![], vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![0.0, 1.0], vec![1.2, -0.2]).is_err());
    }

    #[test]
    fn expected_max_examples() {
        let one = Instance::independent(vec![DiscreteDistribution::point_mass(1.0).unwrap()]).unwrap();
        assert_eq!(exact_expected_max(&one), 1.0);

        let fair = d(&[(0.0, 0.5), (1.0, 0.5)]);
        let two = Instance::iid(fair, 2).unwrap();
        assert!((exact_expected_max(&two) - 0.75).abs() < 1e-15);

        let r = 3f64.sqrt() - 1.0;
        let inst = Instance::independent(vec![d(&[(r, 1.0)]), d(&[(0.0, 0.75), (2.0, 0.25)])]).unwrap();
        assert!((exact_expected_max(&inst) - (0.75 * r + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn geometric_mean_examples() {
        let f = d(&[(0.0, 0.3), (2.0, 0.5), (5.0, 0.2)]);
        let g = geometric_mean_cdf(&[f.clone(), f.clone(), f.clone()]).unwrap();
        for (a, b) in g.iter().zip(f.iter()) {
            assert!((a.0 - b.0).abs() == 0.0 && (a.1 - b.1).abs() < 1e-12);
        }
        assert_eq!(geometric_mean_cdf(std::slice::from_ref(&f)).unwrap().support(), f.support());

        let g = geometric_mean_cdf(&[d(&[(0.0, 0.9), (10.0, 0.1)]), d(&[(0.0, 0.8), (10.0, 0.2)])]).unwrap();
        let root = 0.72f64.sqrt();
        assert!((g.mass_at(0.0) - root).abs() < 1e-12);
        assert!((g.mass_at(10.0) - (1.0 - root)).abs() < 1e-12);
        // max of two G draws vs max of the originals, enumerated
        assert!((g.mass_at(0.0).powi(2) - 0.72).abs() < 1e-12);
    }

    #[test]
    fn truncation_and_censoring() {
        let base = d(&[(0.0, 0.5), (5.0, 0.3), (100.0, 0.2)]);
        let t = base.truncate_below(5.0);
        assert_eq!(t.support(), &[0.0, 100.0]);
        assert!((t.probs()[0] - 0.8).abs() < 1e-15);
        assert_eq!(base.truncate_below(0.0), base);
        assert_eq!(d(&[(1.0, 1.0)]).truncate_below(2.0).support(), &[0.0]);

        let c = base.censor_above(10.0);
        assert_eq!(c.support(), &[0.0, 5.0]);
        assert!((c.probs()[0] - 0.7).abs() < 1e-15);
        assert_eq!(base.censor_above(100.0), base);
        assert_eq!(d(&[(0.0, 0.9), (10.0, 0.1)]).censor_above(0.0).support(), &[0.0]);
    }

    #[test]
    fn eps_smallness() {
        assert!(d(&[(0.0, 0.95), (1.0, 0.05)]).is_eps_small(0.1));
        assert!(!d(&[(0.0, 0.8), (1.0, 0.2)]).is_eps_small(0.1));
        assert!(!d(&[(1.0, 1.0)]).is_eps_small(0.5));
    }

    #[test]
    fn thinning_matches_tail_formula() {
        let fair = d(&[(0.0, 0.5), (1.0, 0.5)]);
        let thin = fair.thinned(0.5);
        assert!((thin.tail(0.5) - 0.25).abs() < 1e-15);
        assert_eq!(fair.thinned(1.0), fair);
    }

    #[test]
    fn sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let seven = d(&[(7.0, 1.0)]);
        assert!((0..100).all(|_| seven.sample(&mut rng) == 7.0));

        let fair = d(&[(0.0, 0.5), (1.0, 0.5)]);
        let ones: f64 = (0..100_000).map(|_| fair.sample(&mut rng)).sum();
        assert!((ones / 1e5 - 0.5).abs() < 0.01);

        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| fair.sample(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn instance_text_round_trip_and_validation() {
        let r = 3f64.sqrt() - 1.0;
        let inst = Instance::new(
            vec![d(&[(0.0, 0.99), (10.0, 0.01)]), d(&[(0.0, 0.99), (10.0, 0.01)]), d(&[(r, 1.0)])],
            2,
        )
        .unwrap();
        let text = inst.to_text();
        assert!(text.ends_with("1 0.7320508075688772 1.0\n"));
        assert_eq!(Instance::parse(&text).unwrap(), inst);

        assert!(Instance::parse("2 0\n1 1.0 1.0\n").is_err());
        assert!(Instance::parse("1 0\n2 1.0 0.5 0.0 0.5\n").is_err());
        assert!(Instance::parse("2 2\n1 1.0 1.0\n1 2.0 1.0\n").is_err());
        assert!(Instance::new(vec![], 0).is_err());
    }

    fn arb_dist() -> impl Strategy<Value = DiscreteDistribution> {
        prop::collection::vec((0u32..6, 1u32..10), 1..=4).prop_map(|raw| {
            let total: u32 = raw.iter().map(|r| r.1).sum();
            let pairs: Vec<(f64, f64)> = raw.iter().map(|&(v, w)| (v as f64, w as f64 / total as f64)).collect();
            DiscreteDistribution::from_pairs(&pairs).unwrap()
        })
    }

    fn enumerate_expected_max(dists: &[DiscreteDistribution]) -> f64 {
        fn rec(dists: &[DiscreteDistribution], acc_max: f64, acc_p: f64) -> f64 {
            match dists.split_first() {
                None => acc_max * acc_p,
                Some((head, rest)) => head.iter().map(|(v, p)| rec(rest, acc_max.max(v), acc_p * p)).sum(),
            }
        }
        rec(dists, 0.0, 1.0)
    }

    proptest! {
        #[test]
        fn geometric_mean_preserves_law_of_max(dists in prop::collection::vec(arb_dist(), 1..=5)) {
            let g = geometric_mean_cdf(&dists).unwrap();
            let s = dists.len() as i32;
            for x in merged_support(&dists) {
                let h: f64 = dists.iter().map(|d| d.cdf(x)).product();
                prop_assert!((g.cdf(x).powi(s) - h).abs() < 1e-12);
            }
        }

        #[test]
        fn expected_max_matches_enumeration(dists in prop::collection::vec(arb_dist(), 1..=6)) {
            let inst = Instance::independent(dists.clone()).unwrap();
            prop_assert!((exact_expected_max(&inst) - enumerate_expected_max(&dists)).abs() < 1e-10);
        }

        #[test]
        fn relocations_preserve_mass(d in arb_dist(), cut in 0.0f64..6.0) {
            let t: f64 = d.truncate_below(cut).probs().iter().sum();
            let c: f64 = d.censor_above(cut).probs().iter().sum();
            prop_assert!((t - 1.0).abs() < 1e-12);
            prop_assert!((c - 1.0).abs() < 1e-12);
        }

        #[test]
        fn lower_tail_cut_loses_at_most_its_mass(dists in prop::collection::vec(arb_dist(), 1..=5), cut in 0.0f64..6.0) {
            let eps_prime: f64 = dists.iter().map(|d| d.cdf(cut)).product();
            let truncated: Vec<_> = dists.iter().map(|d| d.truncate_below(cut)).collect();
            let lhs = (1.0 - eps_prime) * expected_max_of(&dists);
            prop_assert!(lhs <= expected_max_of(&truncated) + 1e-12);
        }
    }
}
