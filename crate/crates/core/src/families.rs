//! Instance generators shared by the command-line tool, the checks and the demo.

use rand::Rng;

use crate::dist::{DiscreteDistribution, Instance};
use crate::error::{Error, Result};

/// `n` i.i.d. copies of `{0: 1-p, 1: p}`.
pub fn iid_bernoulli(n: usize, p: f64) -> Result<Instance> {
    Instance::iid(DiscreteDistribution::two_point(0.0, 1.0, p)?, n)
}

/// `n-1` copies of `{0: 1-1/n^2, n: 1/n^2}` followed by the constant `sqrt(3)-1`.
pub fn sqrt3_example(n: usize) -> Result<Instance> {
    if n < 2 {
        return Err(Error::Parameter("the example needs n >= 2".into()));
    }
    let nf = n as f64;
    let g = DiscreteDistribution::two_point(0.0, nf, 1.0 / (nf * nf))?;
    let mut dists = vec![g; n - 1];
    dists.push(DiscreteDistribution::point_mass(3f64.sqrt() - 1.0)?);
    Instance::new(dists, n - 1)
}

/// A law on at most `max_support` integer values in `0..=max_value` with random weights.
pub fn random_law<R: Rng + ?Sized>(rng: &mut R, max_support: usize, max_value: u32) -> DiscreteDistribution {
    let m = rng.random_range(1..=max_support.max(1));
    let pairs: Vec<(f64, f64)> = (0..m)
        .map(|_| (f64::from(rng.random_range(0..=max_value)), f64::from(rng.random_range(1u32..=8))))
        .collect();
    normalized(&pairs)
}

/// An `eps`-small law: `0` with probability at least `1-eps`, plus up to
/// `max_support - 1` positive integer values in `1..=max_value`.
pub fn random_eps_small_law<R: Rng + ?Sized>(
    rng: &mut R,
    eps: f64,
    max_support: usize,
    max_value: u32,
) -> DiscreteDistribution {
    let positive = rng.random_range(1..max_support.max(2));
    let mass = eps * rng.random::<f64>();
    let weights: Vec<(f64, f64)> = (0..positive)
        .map(|_| (f64::from(rng.random_range(1..=max_value)), f64::from(rng.random_range(1u32..=8))))
        .collect();
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut pairs = vec![(0.0, 1.0 - mass)];
    pairs.extend(weights.iter().map(|&(x, w)| (x, mass * w / total)));
    normalized(&pairs)
}

fn normalized(pairs: &[(f64, f64)]) -> DiscreteDistribution {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(x, w)| (x, w / total)).collect();
    DiscreteDistribution::from_pairs(&scaled).expect("normalized weights form a distribution")
}

/// `s` i.i.d. copies of one random law followed by `n - s` independent random laws.
pub fn random_discrete<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    s: usize,
    max_support: usize,
    max_value: u32,
) -> Result<Instance> {
    if s > n {
        return Err(Error::Parameter(format!("pool size {s} exceeds n = {n}")));
    }
    let pool = random_law(rng, max_support, max_value);
    let mut dists = vec![pool; s];
    dists.extend((s..n).map(|_| random_law(rng, max_support, max_value)));
    Instance::new(dists, s)
}

/// `n` independent `eps`-small laws.
pub fn eps_small_random<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    eps: f64,
    max_support: usize,
    max_value: u32,
) -> Result<Instance> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("eps = {eps} outside (0, 1)")));
    }
    Instance::independent((0..n).map(|_| random_eps_small_law(rng, eps, max_support, max_value)).collect())
}
