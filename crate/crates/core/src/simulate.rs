//! Seeded Monte Carlo execution of policies and the end-to-end
//! sample-based pipeline.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::{exact_expected_max, Instance, ModelKind};
use crate::error::{Error, Result};
use crate::estimation::{classify, estimate_distributions, sample_budget, ClassificationResult, SampleMatrix};
use crate::policy::{extract_policy, Context, DecisionRule, Preprocess, RandomizedPolicy};
use crate::program::{build_adaptive_reduced, build_ordered_reduced};
use crate::reduction::{build_auxiliary, AuxiliaryInstance, BernoulliFilter, Jitter};

/// Episodes handled by one work unit; partial sums are combined in chunk order.
const CHUNK: usize = 2048;

/// Mixes an index into a master seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    /// Variables in arrival order.
    pub order: Vec<usize>,
    /// 0-based position at which the run stopped.
    pub stop_position: Option<usize>,
    pub reward: f64,
    /// Arrivals observed, in order (a prefix of `order`).
    pub visited: Vec<usize>,
    /// Decisions that fell back to the threshold rule for unseen values.
    pub off_support: usize,
}

/// Runs one episode. Deterministic in `seed`.
pub fn run_episode(pol: &RandomizedPolicy, inst: &Instance, model: ModelKind, seed: u64) -> Result<EpisodeTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    episode(pol, inst, model, &mut rng)
}

fn episode<R: Rng>(pol: &RandomizedPolicy, inst: &Instance, model: ModelKind, rng: &mut R) -> Result<EpisodeTrace> {
    let n = inst.n();
    if pol.n() != n {
        return Err(Error::Mismatch(format!("policy for {} variables, instance has {n}", pol.n())));
    }
    let values: Vec<f64> = inst.dists().iter().map(|d| d.sample(rng)).collect();
    let (order, contexts) = match (model, &pol.rule) {
        (ModelKind::ProphetSecretary | ModelKind::FixedOrder, DecisionRule::Adaptive { space, .. }) => {
            let mut order: Vec<usize> = (0..n).collect();
            if model == ModelKind::ProphetSecretary {
                order.shuffle(rng);
            }
            let mut idx = space.len() - 1;
            let mut contexts = Vec::with_capacity(n);
            for &i in &order {
                contexts.push(Context::State(idx));
                idx -= space.stride(pol.profile.type_of(i));
            }
            (order, contexts)
        }
        (ModelKind::FreeOrder, DecisionRule::Ordered { branches }) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let b = branches
                .iter()
                .position(|br| {
                    acc += br.weight;
                    u < acc
                })
                .unwrap_or(branches.len() - 1);
            let mut pools: Vec<Vec<usize>> = vec![Vec::new(); pol.profile.num_types()];
            for i in 0..n {
                pools[pol.profile.type_of(i)].push(i);
            }
            pools.iter_mut().for_each(|p| p.shuffle(rng));
            let order: Vec<usize> = branches[b]
                .order
                .iter()
                .map(|&t| pools[t].pop().expect("order is an arrangement of the roles"))
                .collect();
            let contexts = (0..n).map(|pos| Context::Position { branch: b, pos }).collect();
            (order, contexts)
        }
        (model, _) => return Err(Error::Mismatch(format!("policy kind does not match the {model} model"))),
    };
    let mut trace = EpisodeTrace {
        order,
        stop_position: None,
        reward: 0.0,
        visited: Vec::new(),
        off_support: 0,
    };
    for (pos, ctx) in contexts.into_iter().enumerate() {
        let i = trace.order[pos];
        trace.visited.push(i);
        let y = pol.preprocess.observe(values[i], rng);
        let d = pol.decide(ctx, pol.profile.type_of(i), y)?;
        trace.off_support += usize::from(d.off_support);
        if rng.random::<f64>() < d.accept {
            trace.stop_position = Some(pos);
            trace.reward = values[i];
            break;
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McStats {
    pub episodes: usize,
    pub mean_reward: f64,
    /// Sample standard deviation over `sqrt(episodes)`.
    pub stderr: f64,
    pub visit_freq: Vec<f64>,
    /// `mean_reward / E[max]` of the simulated instance.
    pub ratio: f64,
    pub off_support_rate: f64,
}

impl McStats {
    pub fn min_visit_freq(&self) -> f64 {
        self.visit_freq.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone)]
struct Partial {
    sum: f64,
    sum_sq: f64,
    visits: Vec<u64>,
    off: u64,
}

impl Partial {
    fn new(n: usize) -> Self {
        Self {
            sum: 0.0,
            sum_sq: 0.0,
            visits: vec![0; n],
            off: 0,
        }
    }

    fn merge(mut self, other: &Partial) -> Self {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.off += other.off;
        self.visits.iter_mut().zip(&other.visits).for_each(|(a, b)| *a += b);
        self
    }
}

fn run_chunk(pol: &RandomizedPolicy, inst: &Instance, model: ModelKind, seed: u64, range: std::ops::Range<usize>) -> Result<Partial> {
    let mut part = Partial::new(inst.n());
    for e in range {
        let tr = run_episode(pol, inst, model, derive_seed(seed, e as u64))?;
        part.sum += tr.reward;
        part.sum_sq += tr.reward * tr.reward;
        part.off += tr.off_support as u64;
        for &i in &tr.visited {
            part.visits[i] += 1;
        }
    }
    Ok(part)
}

/// Aggregates independent episodes with per-episode derived seeds. The
/// result does not depend on the number of worker threads.
pub fn monte_carlo(pol: &RandomizedPolicy, inst: &Instance, model: ModelKind, episodes: usize, seed: u64) -> Result<McStats> {
    if episodes == 0 {
        return Err(Error::Parameter("at least one episode is required".into()));
    }
    let chunks: Vec<std::ops::Range<usize>> =
        (0..episodes.div_ceil(CHUNK)).map(|c| c * CHUNK..((c + 1) * CHUNK).min(episodes)).collect();
    #[cfg(feature = "parallel")]
    let partials: Vec<Result<Partial>> = {
        use rayon::prelude::*;
        chunks.into_par_iter().map(|r| run_chunk(pol, inst, model, seed, r)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Result<Partial>> = chunks.into_iter().map(|r| run_chunk(pol, inst, model, seed, r)).collect();

    let mut total = Partial::new(inst.n());
    for p in partials {
        total = total.merge(&p?);
    }
    let k = episodes as f64;
    let mean = total.sum / k;
    let var = if episodes > 1 {
        ((total.sum_sq - k * mean * mean) / (k - 1.0)).max(0.0)
    } else {
        0.0
    };
    let emax = exact_expected_max(inst);
    Ok(McStats {
        episodes,
        mean_reward: mean,
        stderr: (var / k).sqrt(),
        visit_freq: total.visits.iter().map(|&v| v as f64 / k).collect(),
        ratio: if emax > 0.0 { mean / emax } else { 1.0 },
        off_support_rate: total.off as f64 / k,
    })
}

/// Header of the comma-separated result rows.
pub const CSV_HEADER: &str = "model,eps,n,episodes,seed,mean_reward,stderr,ratio,min_visit_freq,delta";

pub fn csv_row(model: ModelKind, eps: f64, n: usize, seed: u64, stats: &McStats, delta: f64) -> String {
    format!(
        "{model},{eps:.6},{n},{},{seed},{:.6},{:.6},{:.6},{:.6},{delta:.6}",
        stats.episodes,
        stats.mean_reward,
        stats.stderr,
        stats.ratio,
        stats.min_visit_freq()
    )
}

/// Optional tie-breaking jitter for the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing {
    pub grid: usize,
    /// One prior draw of the maximum; sets the jitter width `eps^2 * xstar`.
    pub xstar: f64,
    /// Seed of the jitter applied to the samples.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub policy: RandomizedPolicy,
    pub classification: ClassificationResult,
    pub auxiliary: AuxiliaryInstance,
    /// Program value on the auxiliary instance.
    pub delta: f64,
    pub states: usize,
    pub jitter: Option<Jitter>,
}

/// Builds the final policy from samples only.
pub fn pipeline_from_samples(
    samples: &SampleMatrix,
    eps: f64,
    model: ModelKind,
    smoothing: Option<Smoothing>,
) -> Result<PipelineOutput> {
    let jitter = match smoothing {
        Some(sm) if sm.xstar > 0.0 => Some(Jitter::new(eps, sm.xstar, sm.grid)?),
        _ => None,
    };
    let smoothed;
    let samples = match (jitter, smoothing) {
        (Some(j), Some(sm)) => {
            smoothed = j.smooth_samples(samples, &mut ChaCha8Rng::seed_from_u64(sm.seed));
            &smoothed
        }
        _ => samples,
    };
    let cls = classify(samples, eps)?;
    let (g, large) = estimate_distributions(samples, &cls, eps)?;
    let aux = build_auxiliary(samples.cols(), &cls, g.as_ref(), &large)?;
    let emax = exact_expected_max(&aux.inst);
    let prog = match model {
        ModelKind::ProphetSecretary => build_adaptive_reduced(&aux.profile, emax)?,
        ModelKind::FreeOrder => build_ordered_reduced(&aux.profile, emax)?,
        ModelKind::FixedOrder => return Err(Error::Parameter("the pipeline targets secretary or free-order arrivals".into())),
    };
    let states = prog.num_states();
    let solved = prog.solve()?;
    let policy = extract_policy(&solved)?
        .attach_tail_rule(&aux.tail)?
        .with_preprocess(Preprocess {
            jitter,
            cutoff: Some(cls.t),
            keep: BernoulliFilter::for_eps(eps)?.keep,
        });
    Ok(PipelineOutput {
        policy,
        classification: cls,
        auxiliary: aux,
        delta: solved.delta,
        states,
        jitter,
    })
}

/// Draws the sample budget from `true_inst` (its only use) and runs the
/// pipeline. With `smooth_grid`, one extra draw of the maximum sets the
/// jitter width.
pub fn run_pipeline(
    true_inst: &Instance,
    eps: f64,
    model: ModelKind,
    seed: u64,
    smooth_grid: Option<usize>,
) -> Result<PipelineOutput> {
    let budget = sample_budget(eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let smoothing = smooth_grid.map(|grid| Smoothing {
        grid,
        xstar: true_inst.dists().iter().map(|d| d.sample(&mut rng)).fold(0.0, f64::max),
        seed: derive_seed(seed, u64::MAX),
    });
    let samples = SampleMatrix::draw(true_inst, budget.total(), &mut rng);
    pipeline_from_samples(&samples, eps, model, smoothing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DiscreteDistribution;
    use crate::oracle::exact_policy_value;
    use crate::profile::TypeProfile;
    use crate::program::{build_folp, build_rpslp};

    fn coins(n: usize) -> Instance {
        Instance::iid(DiscreteDistribution::two_point(0.0, 1.0, 0.5).unwrap(), n).unwrap()
    }

    #[test]
    fn trivial_policies() {
        let inst = coins(3);
        let all = RandomizedPolicy::constant(ModelKind::ProphetSecretary, TypeProfile::distinct(&inst), 1.0).unwrap();
        let none = RandomizedPolicy::constant(ModelKind::ProphetSecretary, TypeProfile::distinct(&inst), 0.0).unwrap();
        for seed in 0..20 {
            let tr = run_episode(&all, &inst, ModelKind::ProphetSecretary, seed).unwrap();
            assert_eq!(tr.stop_position, Some(0));
            assert_eq!(tr.visited.len(), 1);
            let tr = run_episode(&none, &inst, ModelKind::ProphetSecretary, seed).unwrap();
            assert_eq!(tr.reward, 0.0);
            assert_eq!(tr.visited.len(), 3);
        }
        let a = run_episode(&all, &inst, ModelKind::ProphetSecretary, 7).unwrap();
        assert_eq!(a, run_episode(&all, &inst, ModelKind::ProphetSecretary, 7).unwrap());
    }

    #[test]
    fn deterministic_accept_all_ratio_one() {
        let inst = Instance::independent(vec![DiscreteDistribution::point_mass(2.0).unwrap()]).unwrap();
        let all = RandomizedPolicy::constant(ModelKind::ProphetSecretary, TypeProfile::distinct(&inst), 1.0).unwrap();
        let st = monte_carlo(&all, &inst, ModelKind::ProphetSecretary, 100, 1).unwrap();
        assert_eq!(st.ratio, 1.0);
        assert_eq!(st.stderr, 0.0);
    }

    #[test]
    fn monte_carlo_matches_exact() {
        let inst = coins(3);
        let pol = extract_policy(&build_rpslp(&inst).unwrap().solve().unwrap()).unwrap();
        let exact = exact_policy_value(&pol, &inst, ModelKind::ProphetSecretary).unwrap();
        let st = monte_carlo(&pol, &inst, ModelKind::ProphetSecretary, 50_000, 3).unwrap();
        assert!((st.mean_reward - exact.expected_reward).abs() <= 4.0 * st.stderr);
        let again = monte_carlo(&pol, &inst, ModelKind::ProphetSecretary, 50_000, 3).unwrap();
        assert_eq!(st, again);

        let mixed = Instance::independent(vec![
            DiscreteDistribution::point_mass(1.0).unwrap(),
            DiscreteDistribution::two_point(0.0, 2.0, 0.5).unwrap(),
            DiscreteDistribution::two_point(0.0, 3.0, 0.3).unwrap(),
        ])
        .unwrap();
        let pol = extract_policy(&build_folp(&mixed).unwrap().solve().unwrap()).unwrap();
        let exact = exact_policy_value(&pol, &mixed, ModelKind::FreeOrder).unwrap();
        let st = monte_carlo(&pol, &mixed, ModelKind::FreeOrder, 50_000, 4).unwrap();
        assert!((st.mean_reward - exact.expected_reward).abs() <= 4.0 * st.stderr);
    }

    #[test]
    fn pipeline_depends_only_on_samples() {
        let inst = coins(4);
        let eps = 0.45;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = SampleMatrix::draw(&inst, sample_budget(eps).unwrap().total(), &mut rng);
        let sm = Some(Smoothing {
            grid: 16,
            xstar: 1.0,
            seed: 9,
        });
        let a = pipeline_from_samples(&samples, eps, ModelKind::ProphetSecretary, sm).unwrap();
        let b = pipeline_from_samples(&samples, eps, ModelKind::ProphetSecretary, sm).unwrap();
        assert_eq!(format!("{:?}", a.policy), format!("{:?}", b.policy));
        let s1 = monte_carlo(&a.policy, &inst, ModelKind::ProphetSecretary, 2000, 1).unwrap();
        let s2 = monte_carlo(&b.policy, &inst, ModelKind::ProphetSecretary, 2000, 2).unwrap();
        assert_ne!(s1.mean_reward, s2.mean_reward);
    }

    #[test]
    fn seeds_are_spread() {
        let a: Vec<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 1000);
    }
}
