//! Instance transformations: the auxiliary pooled instance built from
//! estimates, grid jitter for tie-breaking, and the Bernoulli filter.

use rand::Rng;

use crate::dist::{DiscreteDistribution, Instance};
use crate::error::{Error, Result};
use crate::estimation::{ClassificationResult, SampleMatrix};
use crate::profile::TypeProfile;

pub const DEFAULT_JITTER_GRID: usize = 64;

/// Adds an independent uniform draw from `{delta/grid, 2 delta/grid, ..., delta}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub delta: f64,
    pub grid: usize,
}

impl Jitter {
    /// Jitter of width `eps^2 * xstar`, where `xstar` is one prior draw of the maximum.
    pub fn new(eps: f64, xstar: f64, grid: usize) -> Result<Self> {
        if !(xstar > 0.0 && xstar.is_finite()) {
            return Err(Error::Parameter(format!("jitter scale needs a positive draw, got {xstar}")));
        }
        if grid < 2 {
            return Err(Error::Parameter("jitter grid needs at least 2 levels".into()));
        }
        if eps.is_nan() || eps < 0.0 {
            return Err(Error::Parameter(format!("eps = {eps} must be non-negative")));
        }
        Ok(Self {
            delta: eps * eps * xstar,
            grid,
        })
    }

    /// `x` shifted by `k` grid steps, `k` in `1..=grid`.
    pub fn shift(&self, x: f64, k: usize) -> f64 {
        x + k as f64 * (self.delta / self.grid as f64)
    }

    pub fn apply<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        self.shift(x, rng.random_range(1..=self.grid))
    }

    /// Exact law of a jittered draw.
    pub fn smooth_distribution(&self, d: &DiscreteDistribution) -> DiscreteDistribution {
        if self.delta == 0.0 {
            return d.clone();
        }
        let q = 1.0 / self.grid as f64;
        let pairs: Vec<(f64, f64)> = d
            .iter()
            .flat_map(|(x, p)| (1..=self.grid).map(move |k| (self.shift(x, k), p * q)))
            .collect();
        DiscreteDistribution::from_pairs(&pairs).expect("jitter keeps a valid distribution")
    }

    pub fn smooth_samples<R: Rng + ?Sized>(&self, samples: &SampleMatrix, rng: &mut R) -> SampleMatrix {
        if self.delta == 0.0 {
            return samples.clone();
        }
        samples.map_values(|x| self.apply(x, rng))
    }
}

/// Independent `{0,1}` multipliers with `P(1) = keep`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliFilter {
    pub keep: f64,
}

impl BernoulliFilter {
    pub fn new(keep: f64) -> Result<Self> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::Parameter(format!("keep probability {keep} outside (0, 1]")));
        }
        Ok(Self { keep })
    }

    /// The filter with `keep = 1/(1+eps)`.
    pub fn for_eps(eps: f64) -> Result<Self> {
        Self::new(1.0 / (1.0 + eps))
    }

    pub fn multiplier<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.keep >= 1.0 || rng.random::<f64>() < self.keep {
            1.0
        } else {
            0.0
        }
    }

    /// Law of `Z X`.
    pub fn filtered(&self, d: &DiscreteDistribution) -> DiscreteDistribution {
        d.thinned(self.keep)
    }
}

/// Estimated instance with the small variables pooled into one i.i.d. role.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryInstance {
    /// `|S|` copies of the pooled law, then one law per large variable.
    pub inst: Instance,
    /// Roles indexed by *original* variable: role 0 is the pool when it is
    /// non-empty, large variables follow in increasing index order.
    pub profile: TypeProfile,
    /// Per-role censoring threshold (`M` for the pool, `M_i` otherwise).
    pub tail: Vec<f64>,
}

/// Truncates below `T` and censors above the role threshold.
pub fn build_auxiliary(
    orig_n: usize,
    cls: &ClassificationResult,
    g_hat: Option<&DiscreteDistribution>,
    large_emp: &[(usize, DiscreteDistribution)],
) -> Result<AuxiliaryInstance> {
    if cls.small.is_empty() && cls.large.is_empty() {
        return Err(Error::InvalidClassification("no variables classified".into()));
    }
    let mut seen = vec![false; orig_n];
    for &i in cls.small.iter().chain(&cls.large) {
        if i >= orig_n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidClassification(format!("index {} repeated or out of range", i + 1)));
        }
    }
    if seen.contains(&false) {
        return Err(Error::InvalidClassification("classification does not cover every variable".into()));
    }

    let mut roles = Vec::new();
    let mut tail = Vec::new();
    let mut var_type = vec![0; orig_n];
    let mut dists = Vec::with_capacity(orig_n);
    if !cls.small.is_empty() {
        let g = g_hat.ok_or_else(|| Error::InvalidClassification("missing pooled law".into()))?;
        let pooled = g.truncate_below(cls.t).censor_above(cls.m);
        dists.extend(std::iter::repeat_n(pooled.clone(), cls.small.len()));
        roles.push(pooled);
        tail.push(cls.m);
    }
    for &i in &cls.large {
        let emp = large_emp
            .iter()
            .find(|(j, _)| *j == i)
            .map(|(_, d)| d)
            .ok_or_else(|| Error::InvalidClassification(format!("missing law for large variable {}", i + 1)))?;
        let m_i = cls
            .m_i
            .iter()
            .find(|(j, _)| *j == i)
            .map(|&(_, m)| m)
            .ok_or_else(|| Error::InvalidClassification(format!("missing quantile for large variable {}", i + 1)))?;
        let d = emp.truncate_below(cls.t).censor_above(m_i);
        var_type[i] = roles.len();
        dists.push(d.clone());
        roles.push(d);
        tail.push(m_i);
    }
    Ok(AuxiliaryInstance {
        inst: Instance::new(dists, cls.small.len())?,
        profile: TypeProfile::new(roles, var_type)?,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::exact_expected_max;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jitter_grid() {
        let j = Jitter::new(0.1, 100.0, 4).unwrap();
        assert!((j.delta - 1.0).abs() < 1e-12);
        let got: Vec<f64> = (1..=4).map(|k| j.shift(10.0, k)).collect();
        assert_eq!(got, vec![10.25, 10.5, 10.75, 11.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert!(got.contains(&j.apply(10.0, &mut rng)));
        }
        let id = Jitter::new(0.0, 5.0, 8).unwrap();
        assert_eq!(id.shift(3.0, 8), 3.0);
        assert!(Jitter::new(0.1, 0.0, 4).is_err());
        let law = j.smooth_distribution(&DiscreteDistribution::point_mass(10.0).unwrap());
        assert_eq!(law.support(), &got[..]);
    }

    #[test]
    fn filter_frequency_and_law() {
        let f = BernoulliFilter::for_eps(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let zeros = (0..100_000).filter(|_| f.multiplier(&mut rng) == 0.0).count();
        assert!((zeros as f64 / 1e5 - 0.5).abs() < 0.01);
        let law = f.filtered(&DiscreteDistribution::two_point(0.0, 1.0, 0.5).unwrap());
        assert!((law.tail(0.5) - 0.25).abs() < 1e-15);
        let id = BernoulliFilter::for_eps(0.0).unwrap();
        assert_eq!(id.multiplier(&mut rng), 1.0);
    }

    fn cls(n: usize, large: Vec<usize>, t: f64, m: f64, m_i: Vec<(usize, f64)>) -> ClassificationResult {
        ClassificationResult {
            t,
            small: (0..n).filter(|i| !large.contains(i)).collect(),
            large,
            m,
            m_i,
        }
    }

    #[test]
    fn auxiliary_shapes() {
        let g = DiscreteDistribution::from_pairs(&[(0.0, 0.5), (1.0, 0.3), (5.0, 0.2)]).unwrap();
        let aux = build_auxiliary(3, &cls(3, vec![], 0.0, 10.0, vec![]), Some(&g), &[]).unwrap();
        assert_eq!(aux.inst.num_iid_prefix(), 3);
        assert_eq!(aux.inst.dist(2), &g);

        let f2 = DiscreteDistribution::from_pairs(&[(0.0, 0.5), (2.0, 0.25), (9.0, 0.25)]).unwrap();
        let c = cls(2, vec![1], 0.5, 2.0, vec![(1, 3.0)]);
        let aux = build_auxiliary(2, &c, Some(&g), &[(1, f2.clone())]).unwrap();
        assert_eq!(aux.inst.dist(0), &g.censor_above(2.0));
        assert_eq!(aux.inst.dist(1), &f2.censor_above(3.0));
        assert_eq!(aux.profile.var_types(), &[0, 1]);
        assert_eq!(aux.tail, vec![2.0, 3.0]);
    }

    #[test]
    fn auxiliary_with_exact_laws_keeps_expected_max() {
        let f = DiscreteDistribution::from_pairs(&[(0.0, 0.6), (2.0, 0.3), (7.0, 0.1)]).unwrap();
        let inst = Instance::iid(f.clone(), 4).unwrap();
        let g = crate::dist::geometric_mean_cdf(&vec![f.clone(); 4]).unwrap();
        let aux = build_auxiliary(4, &cls(4, vec![], 0.0, 100.0, vec![]), Some(&g), &[]).unwrap();
        assert!((exact_expected_max(&aux.inst) - exact_expected_max(&inst)).abs() < 1e-12);
    }

    #[test]
    fn auxiliary_rejects_bad_partitions() {
        let g = DiscreteDistribution::point_mass(1.0).unwrap();
        let mut c = cls(2, vec![], 0.0, 1.0, vec![]);
        c.small = vec![0];
        assert!(build_auxiliary(2, &c, Some(&g), &[]).is_err());
        let c = cls(0, vec![], 0.0, 1.0, vec![]);
        assert!(matches!(build_auxiliary(0, &c, None, &[]), Err(Error::InvalidClassification(_))));
    }
}
