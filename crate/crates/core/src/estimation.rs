//! Sample-driven estimators: the lower-tail cutoff `T`, the set of large
//! variables, the upper quantiles `M` / `M_i`, the empirical geometric-mean
//! CDF, DKW radii and the per-stage sample budgets.
//!
//! Every stage reads its own block of rows from one [`SampleMatrix`], in the
//! fixed order `T, L, M, G, large distributions, M_i`, so a run is fully
//! determined by the matrix.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;

use crate::dist::{DiscreteDistribution, Instance};
use crate::error::{parse_err, Error, Result};

/// `k` rows of `n` samples; column `i` holds i.i.d. draws of variable `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    k: usize,
    n: usize,
    values: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(k: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != k * n {
            return Err(Error::InvalidInstance(format!("{} values for a {k}x{n} sample matrix", values.len())));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInstance("samples must be finite and non-negative".into()));
        }
        Ok(Self { k, n, values })
    }

    /// Draws `k` independent rows from the instance.
    pub fn draw<R: Rng + ?Sized>(inst: &Instance, k: usize, rng: &mut R) -> Self {
        let n = inst.n();
        let mut values = Vec::with_capacity(k * n);
        for _ in 0..k {
            values.extend(inst.dists().iter().map(|d| d.sample(rng)));
        }
        Self { k, n, values }
    }

    pub fn rows(&self) -> usize {
        self.k
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.n..(r + 1) * self.n]
    }

    /// Column `i` restricted to a row block.
    pub fn column(&self, i: usize, rows: Range<usize>) -> Vec<f64> {
        rows.map(|r| self.values[r * self.n + i]).collect()
    }

    /// Per-row maxima over the given columns (0 when `cols` is empty).
    pub fn row_max(&self, cols: &[usize], rows: Range<usize>) -> Vec<f64> {
        rows.map(|r| {
            let row = self.row(r);
            cols.iter().map(|&i| row[i]).fold(0.0, f64::max)
        })
        .collect()
    }

    /// Applies `f` to every entry in row-major order.
    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            k: self.k,
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Text format: `k n` on the first line, then `k` lines of `n` values.
impl fmt::Display for SampleMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.k, self.n)?;
        for r in 0..self.k {
            let line: Vec<String> = self.row(r).iter().map(|v| format!("{v:?}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for SampleMatrix {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (no, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| parse_err(no + 1, e)))
            .collect::<Result<_>>()?;
        let [k, n] = dims[..] else {
            return Err(parse_err(no + 1, "header must be `k n`"));
        };
        let mut values = Vec::with_capacity(k * n);
        let mut rows = 0;
        for (no, line) in lines {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|e| parse_err(no + 1, e)))
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(parse_err(no + 1, format!("expected {n} values, found {}", row.len())));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != k {
            return Err(parse_err(1, format!("header announces {k} rows, found {rows}")));
        }
        Self::new(k, n, values)
    }
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Budget("empirical CDF needs at least one sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    pub fn tail(&self, x: f64) -> f64 {
        1.0 - self.eval(x)
    }

    /// The `r`-th smallest sample, 1-indexed.
    pub fn order_stat(&self, r: usize) -> f64 {
        self.sorted[r - 1]
    }

    /// The empirical law as a distribution.
    pub fn to_distribution(&self) -> DiscreteDistribution {
        let k = self.len() as f64;
        let mut support = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for &v in &self.sorted {
            if support.last() == Some(&v) {
                *probs.last_mut().unwrap() += 1.0 / k;
            } else {
                support.push(v);
                probs.push(1.0 / k);
            }
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        DiscreteDistribution::new(support, probs).expect("empirical law is a valid distribution")
    }
}

/// Rows consumed by each estimation stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleBudget {
    pub k1: usize,
    pub k2: usize,
    pub k_m: usize,
    pub k_g: usize,
    pub k_l: usize,
    pub k_mi: usize,
}

impl SampleBudget {
    pub fn total(&self) -> usize {
        self.k1 + self.k2 + self.k_m + self.k_g + self.k_l + self.k_mi
    }

    /// Row ranges of the six stages, in consumption order.
    pub fn blocks(&self) -> [Range<usize>; 6] {
        let sizes = [self.k1, self.k2, self.k_m, self.k_g, self.k_l, self.k_mi];
        let mut start = 0;
        sizes.map(|len| {
            let r = start..start + len;
            start += len;
            r
        })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 0.5 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("eps = {eps} must lie in (0, 1/2]")))
    }
}

pub fn sample_budget(eps: f64) -> Result<SampleBudget> {
    check_eps(eps)?;
    let k1 = (6.0 * eps.powi(-3) * (1.0 / eps).ln()).ceil() as usize;
    let k_m = eps.powi(-4).ceil() as usize;
    let k_g = eps.powi(-5).ceil() as usize;
    Ok(SampleBudget {
        k1,
        k2: k1,
        k_m,
        k_g,
        k_l: k_g,
        k_mi: k_g,
    })
}

fn ranked(samples: &[f64], rank: f64, what: &str) -> Result<f64> {
    let r = rank.floor() as usize;
    if r == 0 || r > samples.len() {
        return Err(Error::Budget(format!("{what}: rank {r} with {} samples", samples.len())));
    }
    Ok(EmpiricalCdf::new(samples.to_vec())?.order_stat(r))
}

/// The `floor(k1 eps (1-eps))`-th smallest sample of the maximum.
pub fn estimate_t(max_samples: &[f64], eps: f64) -> Result<f64> {
    ranked(max_samples, max_samples.len() as f64 * eps * (1.0 - eps), "lower-tail cutoff")
}

/// Indices whose empirical mass strictly above `t` exceeds `(1-eps) eps`.
pub fn classify_large(cdfs: &[EmpiricalCdf], t: f64, eps: f64) -> Vec<usize> {
    let bar = (1.0 - eps) * eps;
    (0..cdfs.len()).filter(|&i| cdfs[i].tail(t) > bar).collect()
}

/// Empirical `(1-eps)^2`-quantile of the small-variable maximum.
pub fn estimate_m(small_max_samples: &[f64], eps: f64) -> Result<f64> {
    ranked(small_max_samples, small_max_samples.len() as f64 * (1.0 - eps).powi(2), "small-pool quantile")
}

/// Empirical `(1-eps^3)^2`-quantile of one large variable.
pub fn estimate_mi(samples: &[f64], eps: f64) -> Result<f64> {
    ranked(samples, samples.len() as f64 * (1.0 - eps.powi(3)).powi(2), "large-variable quantile")
}

/// `H^(1/s)` for the empirical CDF `H` of the pooled maximum.
pub fn empirical_geometric_cdf(small_max_samples: &[f64], s: usize) -> Result<DiscreteDistribution> {
    if s == 0 {
        return Err(Error::Parameter("geometric mean over an empty pool".into()));
    }
    let h = EmpiricalCdf::new(small_max_samples.to_vec())?.to_distribution();
    let grid = h.support().to_vec();
    let cdf: Vec<f64> = grid.iter().map(|&x| h.cdf(x).powf(1.0 / s as f64)).collect();
    DiscreteDistribution::from_cdf_grid(&grid, &cdf)
}

/// Uniform deviation radius `sqrt(ln k / k)`.
pub fn dkw_radius(k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::Parameter("DKW radius needs k >= 2".into()));
    }
    let k = k as f64;
    Ok((k.ln() / k).sqrt())
}

/// Whether `(1-eps)(1-Fp) <= 1-F <= (1+eps)(1-Fp)` at every merged support
/// point not above `m`.
pub fn multiplicative_band_check(f: &DiscreteDistribution, fp: &DiscreteDistribution, m: f64, eps: f64) -> bool {
    const SLACK: f64 = 1e-12;
    crate::dist::merged_support([f, fp]).into_iter().filter(|&x| x <= m).all(|x| {
        let (a, b) = (f.tail(x), fp.tail(x));
        (1.0 - eps) * b <= a + SLACK && a <= (1.0 + eps) * b + SLACK
    })
}

/// Outcome of the classification stages.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub t: f64,
    pub large: Vec<usize>,
    pub small: Vec<usize>,
    pub m: f64,
    /// `(index, M_i)` for every large index, in increasing index order.
    pub m_i: Vec<(usize, f64)>,
}

impl fmt::Display for ClassificationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids = |v: &[usize]| v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ");
        writeln!(f, "T = {:.6}", self.t)?;
        writeln!(f, "L = {}", ids(&self.large))?;
        writeln!(f, "S = {}", ids(&self.small))?;
        writeln!(f, "M = {:.6}", self.m)?;
        let mi: Vec<String> = self.m_i.iter().map(|(i, m)| format!("{}:{m:.6}", i + 1)).collect();
        writeln!(f, "M_i = {}", mi.join(" "))
    }
}

fn check_rows(samples: &SampleMatrix, budget: &SampleBudget) -> Result<()> {
    if samples.rows() < budget.total() {
        return Err(Error::Budget(format!(
            "{} sample rows, {} required",
            samples.rows(),
            budget.total()
        )));
    }
    Ok(())
}

/// Runs the cutoff, classification and quantile stages.
pub fn classify(samples: &SampleMatrix, eps: f64) -> Result<ClassificationResult> {
    let budget = sample_budget(eps)?;
    check_rows(samples, &budget)?;
    let [b_t, b_l, b_m, _, _, b_mi] = budget.blocks();
    let n = samples.cols();
    let all: Vec<usize> = (0..n).collect();

    let t = estimate_t(&samples.row_max(&all, b_t), eps)?;
    let cdfs = (0..n)
        .map(|i| EmpiricalCdf::new(samples.column(i, b_l.clone())))
        .collect::<Result<Vec<_>>>()?;
    let large = classify_large(&cdfs, t, eps);
    let small: Vec<usize> = (0..n).filter(|i| !large.contains(i)).collect();
    let m = if small.is_empty() {
        0.0
    } else {
        estimate_m(&samples.row_max(&small, b_m), eps)?
    };
    let m_i = large
        .iter()
        .map(|&i| Ok((i, estimate_mi(&samples.column(i, b_mi.clone()), eps)?)))
        .collect::<Result<_>>()?;
    Ok(ClassificationResult { t, large, small, m, m_i })
}

/// Pooled small-variable law (if any) and the laws of the large variables.
pub type EstimatedLaws = (Option<DiscreteDistribution>, Vec<(usize, DiscreteDistribution)>);

/// Raw empirical laws from the `G` and large-distribution blocks: the
/// geometric-mean CDF of the small pool (absent when the pool is empty) and
/// the empirical law of each large variable.
pub fn estimate_distributions(
    samples: &SampleMatrix,
    cls: &ClassificationResult,
    eps: f64,
) -> Result<EstimatedLaws> {
    let budget = sample_budget(eps)?;
    check_rows(samples, &budget)?;
    let [_, _, _, b_g, b_dist, _] = budget.blocks();
    let g = if cls.small.is_empty() {
        None
    } else {
        Some(empirical_geometric_cdf(&samples.row_max(&cls.small, b_g), cls.small.len())?)
    };
    let large = cls
        .large
        .iter()
        .map(|&i| Ok((i, EmpiricalCdf::new(samples.column(i, b_dist.clone()))?.to_distribution())))
        .collect::<Result<_>>()?;
    Ok((g, large))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn budgets() {
        let b = sample_budget(0.2).unwrap();
        assert_eq!(b.k1, 1208);
        assert_eq!(b.k_g, 3125);
        assert_eq!(b.k_m, 625);
        assert_eq!(sample_budget(0.5).unwrap().k1, 34);
        assert!(sample_budget(0.6).is_err());
        assert!(sample_budget(0.0).is_err());
        let blocks = b.blocks();
        assert_eq!(blocks[0], 0..1208);
        assert_eq!(blocks[5].end, b.total());
    }

    #[test]
    fn rank_estimators() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(estimate_t(&xs, 0.1).unwrap(), 9.0);
        assert_eq!(estimate_m(&xs, 0.1).unwrap(), 81.0);
        assert_eq!(estimate_t(&[3.0; 7], 0.2).unwrap(), 3.0);
        assert!(matches!(estimate_t(&[1.0; 5], 0.01), Err(Error::Budget(_))));
        assert_eq!(estimate_m(&[4.0, 1.0, 3.0, 2.0], 0.49).unwrap(), 1.0);
        let ys: Vec<f64> = (1..=3125).map(f64::from).collect();
        assert_eq!(estimate_mi(&ys, 0.2).unwrap(), 3075.0);
        assert_eq!(estimate_mi(&[2.5; 10], 0.2).unwrap(), 2.5);
    }

    #[test]
    fn large_classification() {
        let cdf = |hi: usize| {
            let mut v = vec![0.0; 100 - hi];
            v.extend(std::iter::repeat_n(5.0, hi));
            EmpiricalCdf::new(v).unwrap()
        };
        let cdfs = [cdf(30), cdf(10), cdf(0)];
        assert_eq!(classify_large(&cdfs, 1.0, 0.2), vec![0]);
        assert!(classify_large(&cdfs, 5.0, 0.2).is_empty());
    }

    #[test]
    fn geometric_empirical() {
        let mut xs = vec![0.0; 50];
        xs.extend(vec![1.0; 50]);
        let g = empirical_geometric_cdf(&xs, 4).unwrap();
        assert!((g.cdf(0.0) - 0.5f64.powf(0.25)).abs() < 1e-12);
        assert!((g.cdf(0.0) - 0.840896).abs() < 1e-6);
        let g1 = empirical_geometric_cdf(&xs, 1).unwrap();
        assert!((g1.cdf(0.0) - 0.5).abs() < 1e-12);
        assert_eq!(empirical_geometric_cdf(&[0.0; 9], 3).unwrap(), DiscreteDistribution::point_mass(0.0).unwrap());
    }

    #[test]
    fn dkw() {
        assert!((dkw_radius(10_000).unwrap() - 0.030349).abs() < 1e-6);
        // sqrt(ln 3 / 3) = 0.605148...
        assert!((dkw_radius(3).unwrap() - 0.605148).abs() < 1e-6);
        assert!(dkw_radius(1_000_000).unwrap() < dkw_radius(10_000).unwrap());
        assert!(dkw_radius(1).is_err());
    }

    #[test]
    fn band_check() {
        let f = DiscreteDistribution::two_point(0.0, 1.0, 0.11).unwrap();
        let fp = DiscreteDistribution::two_point(0.0, 1.0, 0.10).unwrap();
        assert!(multiplicative_band_check(&fp, &fp, 10.0, 0.0));
        assert!(!multiplicative_band_check(&f, &fp, 10.0, 0.05));
        assert!(multiplicative_band_check(&f, &fp, 10.0, 0.2));
        // above M nothing is checked
        assert!(multiplicative_band_check(&f, &fp, -1.0, 0.0));
    }

    #[test]
    fn sample_file_round_trip() {
        let m = SampleMatrix::new(2, 3, vec![0.0, 1.5, 2.0, 3.0, 0.25, 1.0]).unwrap();
        let text = m.to_string();
        assert_eq!(text, "2 3\n0.0 1.5 2.0\n3.0 0.25 1.0\n");
        assert_eq!(text.parse::<SampleMatrix>().unwrap(), m);
        assert!("2 3\n1 2 3\n".parse::<SampleMatrix>().is_err());
        assert!("1 2\n1 -2\n".parse::<SampleMatrix>().is_err());
    }

    #[test]
    fn classify_requires_budget() {
        let inst = Instance::iid(DiscreteDistribution::point_mass(1.0).unwrap(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = SampleMatrix::draw(&inst, 100, &mut rng);
        assert!(matches!(classify(&m, 0.2), Err(Error::Budget(_))));
    }

    #[test]
    fn obvious_large_variable() {
        // variable 0 carries mass 0.5 above every small value
        let big = DiscreteDistribution::two_point(0.0, 10.0, 0.5).unwrap();
        let small = DiscreteDistribution::two_point(0.0, 1.0, 0.05).unwrap();
        let inst = Instance::independent(vec![big, small.clone(), small.clone(), small]).unwrap();
        let eps = 0.25;
        let rows = sample_budget(eps).unwrap().total();
        let mut hits = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cls = classify(&SampleMatrix::draw(&inst, rows, &mut rng), eps).unwrap();
            assert_eq!(cls.large.len() + cls.small.len(), 4);
            hits += usize::from(cls.large.contains(&0));
        }
        assert!(hits as f64 >= 40.0 * (1.0 - 2.0 * eps));
    }

    proptest! {
        #[test]
        fn empirical_cdf_is_a_cdf(xs in prop::collection::vec(0.0f64..10.0, 1..60), probe in -1.0f64..11.0) {
            let cdf = EmpiricalCdf::new(xs.clone()).unwrap();
            let v = cdf.eval(probe);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(cdf.eval(probe + 0.5) >= v);
            let max = xs.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(cdf.eval(max), 1.0);
            let d = cdf.to_distribution();
            prop_assert!((d.cdf(probe) - v).abs() < 1e-12);
        }
    }
}
