//! Monte-Carlo estimation of joint Shapley values.
//!
//! For a target `T` of size `t`, draw the number `X` of agents already
//! present from [`arrival_size_distribution`], draw `S` uniformly among the
//! size-`X` subsets of `N∖T`, and average `v(T∪S) − v(S)`; the mean times
//! `Σ_j C(n−t, j) q_j` estimates `φ_T`.
//!
//! Randomness: every run uses ChaCha8 seeded with `seed`. Target number `j`
//! (its position in the target list) draws from stream `j` of that seed, so
//! each estimate depends only on `(seed, j, iterations)` and not on thread
//! scheduling or on the other targets.

use std::collections::BTreeMap;
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coalition::{full_mask, Coalition};
use crate::coefficients::{arrival_size_distribution, compute_q, ArrivalSizeDistribution};
use crate::combinatorics::binomial;
use crate::error::{Error, Result};
use crate::game::{Game, WorthTable};
use crate::indices::{IndexKind, IndexResult, Mode};
use crate::worth::{ratio_to_f64, Worth};

pub type SamplerRng = ChaCha8Rng;

/// Anything the sampler can draw marginal contributions from.
pub trait ValueSource: Sync {
    fn n(&self) -> usize;

    /// One draw of `v(with) − v(without)`, where `without ⊆ with`. Sources
    /// with internal randomness (sampled baselines) draw it from `rng`.
    fn marginal(&self, with: &Coalition, without: &Coalition, rng: &mut SamplerRng) -> Result<f64>;

    /// Whether `marginal` may run concurrently; otherwise targets are
    /// processed one after another.
    fn parallel_safe(&self) -> bool {
        true
    }
}

/// Adapts any [`Game`] to a [`ValueSource`].
#[derive(Debug, Clone)]
pub struct GameSource<G>(pub G);

impl<G: Game> ValueSource for GameSource<G> {
    fn n(&self) -> usize {
        self.0.n()
    }

    fn marginal(
        &self,
        with: &Coalition,
        without: &Coalition,
        _rng: &mut SamplerRng,
    ) -> Result<f64> {
        Ok((self.0.eval(with)? - self.0.eval(without)?).to_f64())
    }

    fn parallel_safe(&self) -> bool {
        self.0.parallel_safe()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub iterations: u64,
    pub seed: u64,
    /// Iterations between progress checkpoints.
    pub batch: u64,
}

impl SamplerConfig {
    pub fn new(iterations: u64, seed: u64) -> Self {
        SamplerConfig {
            iterations,
            seed,
            batch: iterations.max(1),
        }
    }

    pub fn with_batch(mut self, batch: u64) -> Self {
        self.batch = batch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig(
                "checkpoint interval (batch) must be at least 1 iteration".into(),
            ));
        }
        Ok(())
    }
}

pub fn target_rng(seed: u64, target_index: usize) -> SamplerRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(target_index as u64);
    rng
}

/// Running estimate for one target.
struct TargetSampler {
    target: Coalition,
    complement: Vec<usize>,
    sizes: WeightedIndex<f64>,
    scale: f64,
    rng: SamplerRng,
    count: u64,
    mean: f64,
    m2: f64,
}

impl TargetSampler {
    fn new(target: Coalition, dist: &ArrivalSizeDistribution, rng: SamplerRng) -> Result<Self> {
        let complement: Vec<usize> = target.complement().agents().collect();
        let sizes = WeightedIndex::new(&dist.probs).map_err(|e| {
            Error::InvalidConfig(format!("arrival-size law for |T|={}: {e}", dist.t))
        })?;
        Ok(TargetSampler {
            target,
            complement,
            sizes,
            scale: dist.scale,
            rng,
            count: 0,
            mean: 0.0,
            m2: 0.0,
        })
    }

    fn step<V: ValueSource + ?Sized>(&mut self, source: &V, iterations: u64) -> Result<()> {
        let n = self.target.n();
        for _ in 0..iterations {
            let x = self.sizes.sample(&mut self.rng);
            // partial Fisher-Yates: the first x slots become a uniform x-subset
            let len = self.complement.len();
            for j in 0..x {
                let r = self.rng.gen_range(j..len);
                self.complement.swap(j, r);
            }
            let mut without = Coalition::empty(n);
            for &a in &self.complement[..x] {
                without.insert(a);
            }
            let mut with = without.clone();
            with.union_with(&self.target);
            let d = source.marginal(&with, &without, &mut self.rng)?;
            self.count += 1;
            let delta = d - self.mean;
            self.mean += delta / self.count as f64;
            self.m2 += delta * (d - self.mean);
        }
        Ok(())
    }

    fn estimate(&self) -> f64 {
        self.scale * self.mean
    }

    fn std_error(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let var = self.m2 / (self.count - 1) as f64;
        self.scale * (var / self.count as f64).sqrt()
    }
}

fn build_samplers<V: ValueSource + ?Sized>(
    source: &V,
    k: usize,
    targets: &[Coalition],
    seed: u64,
) -> Result<Vec<TargetSampler>> {
    let n = source.n();
    if k == 0 || k > n {
        return Err(Error::InvalidOrder { k, n });
    }
    if targets.is_empty() {
        return Err(Error::Empty("no target coalitions"));
    }
    let table = compute_q(n, k)?;
    let mut dists: BTreeMap<usize, ArrivalSizeDistribution> = BTreeMap::new();
    let mut samplers = Vec::with_capacity(targets.len());
    for (j, t) in targets.iter().enumerate() {
        if t.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: t.n(),
            });
        }
        let size = t.len();
        if size == 0 || size > k {
            return Err(Error::CoalitionTooLarge { size, k });
        }
        if let std::collections::btree_map::Entry::Vacant(e) = dists.entry(size) {
            e.insert(arrival_size_distribution(&table, size)?);
        }
        samplers.push(TargetSampler::new(
            t.clone(),
            &dists[&size],
            target_rng(seed, j),
        )?);
    }
    Ok(samplers)
}

fn step_all<V: ValueSource + ?Sized>(
    samplers: &mut [TargetSampler],
    source: &V,
    iterations: u64,
) -> Result<()> {
    if source.parallel_safe() {
        samplers
            .par_iter_mut()
            .map(|s| s.step(source, iterations))
            .collect::<Result<Vec<_>>>()?;
    } else {
        for s in samplers.iter_mut() {
            s.step(source, iterations)?;
        }
    }
    Ok(())
}

/// Estimate `φ_T` for each target with `cfg.iterations` draws apiece.
pub fn sample_joint_shapley<V: ValueSource + ?Sized>(
    source: &V,
    k: usize,
    targets: &[Coalition],
    cfg: &SamplerConfig,
) -> Result<IndexResult<f64>> {
    cfg.validate()?;
    let mut samplers = build_samplers(source, k, targets, cfg.seed)?;
    step_all(&mut samplers, source, cfg.iterations)?;
    let values = samplers
        .iter()
        .map(|s| (s.target.clone(), s.estimate()))
        .collect();
    let std_errors = samplers
        .iter()
        .map(|s| (s.target.clone(), s.std_error()))
        .collect();
    Ok(IndexResult {
        kind: IndexKind::JointShapley,
        n: source.n(),
        k: Some(k),
        values,
        mode: Mode::Sampled {
            seed: cfg.seed,
            iterations: cfg.iterations,
        },
        std_errors: Some(std_errors),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub estimates: Vec<(Coalition, f64)>,
    /// Distance to the reference, or to the previous checkpoint (the first
    /// checkpoint compares against the all-zero starting estimate).
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub against_reference: bool,
    pub checkpoints: Vec<Checkpoint>,
}

impl ConvergenceTrace {
    /// CSV with columns `iteration,target,estimate,l2`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "target", "estimate", "l2"])?;
        for cp in &self.checkpoints {
            for (t, est) in &cp.estimates {
                w.write_record([
                    cp.iteration.to_string(),
                    t.key(),
                    format!("{est:?}"),
                    format!("{:?}", cp.l2),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn l2_series(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.l2).collect()
    }
}

/// Record estimates every `cfg.batch` iterations up to `cfg.iterations`.
pub fn convergence_trace<V: ValueSource + ?Sized, W: Worth>(
    source: &V,
    k: usize,
    targets: &[Coalition],
    cfg: &SamplerConfig,
    reference: Option<&IndexResult<W>>,
) -> Result<ConvergenceTrace> {
    cfg.validate()?;
    let mut samplers = build_samplers(source, k, targets, cfg.seed)?;
    let reference_values: Option<Vec<f64>> = match reference {
        Some(r) => Some(
            targets
                .iter()
                .map(|t| {
                    r.get(t).map(Worth::to_f64).ok_or_else(|| {
                        Error::InvalidParameter(format!("reference has no value for {t}"))
                    })
                })
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let mut previous = vec![0.0; samplers.len()];
    let mut done = 0;
    let mut checkpoints = Vec::new();
    while done < cfg.iterations {
        let step = cfg.batch.min(cfg.iterations - done);
        step_all(&mut samplers, source, step)?;
        done += step;
        let current: Vec<f64> = samplers.iter().map(TargetSampler::estimate).collect();
        let base = reference_values.as_ref().unwrap_or(&previous);
        let l2 = current
            .iter()
            .zip(base)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        checkpoints.push(Checkpoint {
            iteration: done,
            estimates: samplers
                .iter()
                .map(|s| (s.target.clone(), s.estimate()))
                .collect(),
            l2,
        });
        previous = current;
    }
    Ok(ConvergenceTrace {
        against_reference: reference.is_some(),
        checkpoints,
    })
}

/// Largest agent count for the arrival-process simulator.
pub const ARRIVAL_MAX_N: usize = 20;

/// Output of [`arrival_process_simulate`].
#[derive(Debug, Clone)]
pub struct ArrivalSimulation {
    pub result: IndexResult<f64>,
    pub iterations: u64,
    k: usize,
    /// Per bitmask: how many runs passed through that arrived set.
    visits: Vec<u64>,
}

impl ArrivalSimulation {
    /// Fraction of runs in which the arrived set was exactly `s` at some time.
    pub fn state_frequency(&self, s: &Coalition) -> f64 {
        let m = s
            .bits()
            .expect("arrival simulation holds at most 20 agents") as usize;
        self.visits[m] as f64 / self.iterations as f64
    }

    /// Empirical `q_t` from the arrived-set frequency of `s` (`|s| < n`):
    /// `P(B = s) / Σ_{r=1}^{min(n−t,k)} C(n−t, r)`.
    pub fn q_hat(&self, s: &Coalition) -> Option<f64> {
        let (n, t) = (s.n(), s.len());
        if t >= n {
            return None;
        }
        let denom: f64 = (1..=self.k.min(n - t))
            .map(|r| ratio_to_f64(&binomial(n - t, r).into()))
            .sum();
        Some(self.state_frequency(s) / denom)
    }
}

/// Simulate whole arrival sequences: starting from nobody, the next arriving
/// coalition is uniform over the non-empty subsets of size at most `k` of
/// the agents still absent. Each arriving coalition is credited its marginal
/// worth; coalitions that never arrive get zero.
pub fn arrival_process_simulate<G: Game>(
    game: &G,
    k: usize,
    cfg: &SamplerConfig,
) -> Result<ArrivalSimulation> {
    cfg.validate()?;
    let n = game.n();
    if n > ARRIVAL_MAX_N {
        return Err(Error::UnsupportedAgentCount {
            n,
            max: ARRIVAL_MAX_N,
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidOrder { k, n });
    }
    let table = WorthTable::tabulate(game)?;
    let worth: Vec<f64> = (0..=full_mask(n)).map(|m| table.get(m).to_f64()).collect();
    // size law of the next arrival given m agents remain
    let size_laws: Vec<Option<WeightedIndex<f64>>> = (0..=n)
        .map(|m| {
            if m == 0 {
                return None;
            }
            let weights: Vec<f64> = (1..=k.min(m))
                .map(|j| ratio_to_f64(&binomial(m, j).into()))
                .collect();
            WeightedIndex::new(weights).ok()
        })
        .collect();

    let size = 1usize << n;
    let mut credit = vec![0.0f64; size];
    let mut credit_sq = vec![0.0f64; size];
    let mut visits = vec![0u64; size];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut remaining: Vec<usize> = Vec::with_capacity(n);

    for _ in 0..cfg.iterations {
        remaining.clear();
        remaining.extend(0..n);
        let mut arrived = 0u64;
        visits[0] += 1;
        while !remaining.is_empty() {
            let law = size_laws[remaining.len()]
                .as_ref()
                .expect("non-empty remainder");
            let j = law.sample(&mut rng) + 1;
            let len = remaining.len();
            for a in 0..j {
                let r = rng.gen_range(a..len);
                remaining.swap(a, r);
            }
            let coalition: u64 = remaining[..j].iter().map(|&a| 1u64 << a).sum();
            remaining.drain(..j);
            let d = worth[(arrived | coalition) as usize] - worth[arrived as usize];
            credit[coalition as usize] += d;
            credit_sq[coalition as usize] += d * d;
            arrived |= coalition;
            visits[arrived as usize] += 1;
        }
    }

    let iters = cfg.iterations as f64;
    let mut values = BTreeMap::new();
    let mut std_errors = BTreeMap::new();
    for m in crate::coalition::masks_up_to(n, k) {
        let c = Coalition::from_bits_unchecked(m, n);
        let mean = credit[m as usize] / iters;
        let var = (credit_sq[m as usize] / iters - mean * mean).max(0.0);
        values.insert(c.clone(), mean);
        std_errors.insert(c, (var / (iters - 1.0).max(1.0)).sqrt());
    }
    Ok(ArrivalSimulation {
        result: IndexResult {
            kind: IndexKind::JointShapley,
            n,
            k: Some(k),
            values,
            mode: Mode::Sampled {
                seed: cfg.seed,
                iterations: cfg.iterations,
            },
            std_errors: Some(std_errors),
        },
        iterations: cfg.iterations,
        k,
        visits,
    })
}
