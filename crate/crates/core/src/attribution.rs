//! Explaining a prediction model with joint Shapley values.
//!
//! For an instance `x`, the prediction difference
//!
//! ```text
//! v_x(S) = mean_{z ∈ A} [f(τ(x, z, S)) − f(z)]
//! ```
//!
//! is a game over the features, where `τ(x, z, S)` takes `x` on `S` and `z`
//! elsewhere and `A` is the dataset. Its joint Shapley values are the local
//! explanation of `x`; averaging them over the dataset gives global ones.

use std::collections::BTreeMap;
use std::marker::PhantomData;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::coalition::{masks_up_to, Coalition};
use crate::coefficients::compute_q;
use crate::combinatorics::binomial;
use crate::error::{Error, Result};
use crate::game::{Game, EXACT_MAX_N, TABLE_MAX_N};
use crate::indices::{joint_shapley_exact, IndexResult};
use crate::model::Model;
use crate::sampler::{sample_joint_shapley, SamplerConfig, SamplerRng, ValueSource};
use crate::worth::{Rational, Worth};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::Dataset("at least one feature is required".into()));
        }
        if rows.is_empty() {
            return Err(Error::Dataset("no rows".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(Error::Dataset(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    feature_names.len()
                )));
            }
        }
        Ok(Dataset {
            feature_names,
            rows,
        })
    }

    /// CSV with a header row of feature names.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_reader(file).map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let names: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Dataset(format!("row {i}: cannot parse `{s}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(names, rows)
    }

    /// Every point of `{0,1}^n` once (row `m` has feature `i` equal to bit
    /// `i` of `m`), with features named `x1 … xn`.
    pub fn binary_product_space(n: usize) -> Result<Self> {
        if n == 0 || n > EXACT_MAX_N {
            return Err(Error::UnsupportedAgentCount {
                n,
                max: EXACT_MAX_N,
            });
        }
        let names = (1..=n).map(|i| format!("x{i}")).collect();
        let rows = (0..1u64 << n)
            .map(|m| (0..n).map(|i| ((m >> i) & 1) as f64).collect())
            .collect();
        Self::new(names, rows)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.rows.get(i).map(Vec::as_slice)
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.rows.iter().flatten().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// `x` on `s`, `z` elsewhere.
pub fn tau(x: &[f64], z: &[f64], s: &Coalition) -> Result<Vec<f64>> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: z.len(),
        });
    }
    if s.n() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: s.n(),
        });
    }
    Ok(x.iter()
        .zip(z)
        .enumerate()
        .map(|(i, (&a, &b))| if s.contains(i) { a } else { b })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// Average over every dataset row.
    Exact,
    /// Draw one dataset row per marginal evaluation.
    Sampled,
}

/// The prediction-difference game `v_x`.
pub struct ValueFunction<'a, W = f64> {
    model: &'a dyn Model,
    dataset: &'a Dataset,
    x: Vec<f64>,
    mode: BaselineMode,
    baseline: Vec<f64>,
    _worth: PhantomData<W>,
}

impl<W> std::fmt::Debug for ValueFunction<'_, W> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ValueFunction")
            .field("x", &self.x)
            .field("mode", &self.mode)
            .field("rows", &self.dataset.len())
            .finish()
    }
}

fn predict_rows(model: &dyn Model, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    if model.parallel_safe() {
        rows.iter()
            .enumerate()
            .map(|(row, z)| {
                model.predict(z).map_err(|e| Error::ModelRow {
                    row,
                    source: Box::new(e),
                })
            })
            .collect()
    } else {
        model.predict_batch(rows)
    }
}

pub fn build_value_function<'a, W: Worth>(
    model: &'a dyn Model,
    dataset: &'a Dataset,
    x: &[f64],
    mode: BaselineMode,
) -> Result<ValueFunction<'a, W>> {
    let baseline = match mode {
        BaselineMode::Exact => predict_rows(model, dataset.rows())?,
        BaselineMode::Sampled => Vec::new(),
    };
    ValueFunction::with_baseline(model, dataset, x, mode, baseline)
}

impl<'a, W: Worth> ValueFunction<'a, W> {
    fn with_baseline(
        model: &'a dyn Model,
        dataset: &'a Dataset,
        x: &[f64],
        mode: BaselineMode,
        baseline: Vec<f64>,
    ) -> Result<Self> {
        if x.len() != dataset.n_features() {
            return Err(Error::DimensionMismatch {
                expected: dataset.n_features(),
                found: x.len(),
            });
        }
        model.accepts(dataset.n_features())?;
        Ok(ValueFunction {
            model,
            dataset,
            x: x.to_vec(),
            mode,
            baseline,
            _worth: PhantomData,
        })
    }

    pub fn instance(&self) -> &[f64] {
        &self.x
    }

    pub fn mode(&self) -> BaselineMode {
        self.mode
    }
}

impl<W: Worth> Game for ValueFunction<'_, W> {
    type Worth = W;

    fn n(&self) -> usize {
        self.x.len()
    }

    fn worth(&self, s: &Coalition) -> Result<W> {
        if s.is_empty() {
            return Ok(W::zero());
        }
        let baseline = if self.baseline.len() == self.dataset.len() {
            std::borrow::Cow::Borrowed(&self.baseline)
        } else {
            std::borrow::Cow::Owned(predict_rows(self.model, self.dataset.rows())?)
        };
        let spliced = self
            .dataset
            .rows()
            .iter()
            .map(|z| tau(&self.x, z, s))
            .collect::<Result<Vec<_>>>()?;
        let preds = predict_rows(self.model, &spliced)?;
        let mut total = W::zero();
        for (fz_tau, fz) in preds.iter().zip(baseline.iter()) {
            total += W::from_f64(*fz_tau)? - W::from_f64(*fz)?;
        }
        Ok(total / W::from_int(self.dataset.len() as i64))
    }

    fn parallel_safe(&self) -> bool {
        self.model.parallel_safe()
    }
}

impl<W: Worth> ValueSource for ValueFunction<'_, W> {
    fn n(&self) -> usize {
        self.x.len()
    }

    fn marginal(&self, with: &Coalition, without: &Coalition, rng: &mut SamplerRng) -> Result<f64> {
        let row = rng.gen_range(0..self.dataset.len());
        let z = &self.dataset.rows()[row];
        let batch = [tau(&self.x, z, with)?, tau(&self.x, z, without)?];
        let preds = if self.model.parallel_safe() {
            vec![
                self.model.predict(&batch[0])?,
                self.model.predict(&batch[1])?,
            ]
        } else {
            self.model.predict_batch(&batch)?
        };
        Ok(preds[0] - preds[1])
    }

    fn parallel_safe(&self) -> bool {
        self.model.parallel_safe()
    }
}

#[derive(Debug, Clone)]
pub enum Estimation {
    Exact,
    Sampled(SamplerConfig),
}

/// Every coalition of size `1..=k` over `n ≤ 64` features, refusing more
/// than `limit` of them.
pub fn all_targets(n: usize, k: usize, limit: usize) -> Result<Vec<Coalition>> {
    if k == 0 || k > n {
        return Err(Error::InvalidOrder { k, n });
    }
    let count: num_bigint::BigInt = (1..=k).map(|t| binomial(n, t)).sum();
    if n > TABLE_MAX_N || count > num_bigint::BigInt::from(limit) {
        return Err(Error::InvalidConfig(format!(
            "{count} target coalitions for n={n}, k={k}; list the targets explicitly"
        )));
    }
    masks_up_to(n, k)
        .into_iter()
        .map(|m| Coalition::from_bits(m, n))
        .collect::<Result<_>>()
}

/// Largest number of coalitions explained when no targets are given.
pub const DEFAULT_TARGET_LIMIT: usize = 100_000;

fn restrict<W: Worth>(
    mut result: IndexResult<W>,
    targets: Option<&[Coalition]>,
) -> Result<IndexResult<W>> {
    if let Some(targets) = targets {
        let mut values = BTreeMap::new();
        for t in targets {
            let v = result.values.get(t).ok_or(Error::CoalitionTooLarge {
                size: t.len(),
                k: result.k.unwrap_or(0),
            })?;
            values.insert(t.clone(), v.clone());
        }
        result.values = values;
    }
    Ok(result)
}

/// Exact local joint Shapley values of `x`, optionally restricted to `targets`.
pub fn local_joint_shapley_exact<W: Worth>(
    model: &dyn Model,
    dataset: &Dataset,
    x: &[f64],
    k: usize,
    targets: Option<&[Coalition]>,
) -> Result<IndexResult<W>> {
    let n = dataset.n_features();
    if n > EXACT_MAX_N {
        return Err(Error::ExactGuard {
            n,
            max: EXACT_MAX_N,
        });
    }
    let vf = build_value_function::<W>(model, dataset, x, BaselineMode::Exact)?;
    restrict(joint_shapley_exact(&vf, k)?, targets)
}

/// Local joint Shapley values of `x` in `f64`, exact or sampled.
pub fn local_joint_shapley(
    model: &dyn Model,
    dataset: &Dataset,
    x: &[f64],
    k: usize,
    estimation: &Estimation,
    targets: Option<&[Coalition]>,
) -> Result<IndexResult<f64>> {
    match estimation {
        Estimation::Exact => local_joint_shapley_exact::<f64>(model, dataset, x, k, targets),
        Estimation::Sampled(cfg) => {
            let vf = build_value_function::<f64>(model, dataset, x, BaselineMode::Sampled)?;
            let owned;
            let targets = match targets {
                Some(t) => t,
                None => {
                    owned = all_targets(dataset.n_features(), k, DEFAULT_TARGET_LIMIT)?;
                    &owned
                }
            };
            sample_joint_shapley(&vf, k, targets, cfg)
        }
    }
}

/// Seed for instance number `i` of a multi-instance run.
pub fn instance_seed(seed: u64, i: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed
        ^ (i as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn explain_rows<W: Worth + Send, F>(
    model: &dyn Model,
    n_rows: usize,
    f: F,
) -> Result<Vec<IndexResult<W>>>
where
    F: Fn(usize) -> Result<IndexResult<W>> + Sync + Send,
{
    if model.parallel_safe() {
        (0..n_rows).into_par_iter().map(f).collect()
    } else {
        (0..n_rows).map(f).collect()
    }
}

/// Exact local values for the given dataset rows, in row order.
pub fn explain_instances_exact<W: Worth>(
    model: &dyn Model,
    dataset: &Dataset,
    rows: &[usize],
    k: usize,
) -> Result<Vec<IndexResult<W>>> {
    let n = dataset.n_features();
    if n > EXACT_MAX_N {
        return Err(Error::ExactGuard {
            n,
            max: EXACT_MAX_N,
        });
    }
    let baseline = predict_rows(model, dataset.rows())?;
    explain_rows(model, rows.len(), |i| {
        let x = dataset
            .row(rows[i])
            .ok_or_else(|| Error::Dataset(format!("no row {}", rows[i])))?;
        let vf = ValueFunction::<W>::with_baseline(
            model,
            dataset,
            x,
            BaselineMode::Exact,
            baseline.clone(),
        )?;
        joint_shapley_exact(&vf, k)
    })
}

/// Local values for the given dataset rows in `f64`; sampled runs seed row
/// number `i` of the list with [`instance_seed`].
pub fn explain_instances(
    model: &dyn Model,
    dataset: &Dataset,
    rows: &[usize],
    k: usize,
    estimation: &Estimation,
    targets: Option<&[Coalition]>,
) -> Result<Vec<IndexResult<f64>>> {
    match estimation {
        Estimation::Exact => explain_instances_exact::<f64>(model, dataset, rows, k)?
            .into_iter()
            .map(|r| restrict(r, targets))
            .collect(),
        Estimation::Sampled(cfg) => explain_rows(model, rows.len(), |i| {
            let x = dataset
                .row(rows[i])
                .ok_or_else(|| Error::Dataset(format!("no row {}", rows[i])))?;
            let cfg = SamplerConfig {
                seed: instance_seed(cfg.seed, i),
                ..*cfg
            };
            local_joint_shapley(model, dataset, x, k, &Estimation::Sampled(cfg), targets)
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalReport<W> {
    pub n: usize,
    pub k: Option<usize>,
    pub instances: usize,
    /// Mean of `|φ_T(v_x)|` over the instances.
    pub mean_abs: BTreeMap<Coalition, W>,
    /// Mean of `±φ_T(v_x)`, positive when every feature of `T` equals 1 in
    /// `x` (binary data only).
    pub presence_adjusted: Option<BTreeMap<Coalition, W>>,
    /// Instances in which every feature of `T` is present.
    pub presence_counts: Option<BTreeMap<Coalition, usize>>,
}

fn check_same_shape<W>(locals: &[IndexResult<W>]) -> Result<&IndexResult<W>> {
    let first = locals
        .first()
        .ok_or(Error::Empty("no local explanations"))?;
    for l in locals {
        if l.n != first.n || l.k != first.k || l.values.len() != first.values.len() {
            return Err(Error::InvalidParameter(
                "local explanations disagree in features, order or coalitions".into(),
            ));
        }
    }
    Ok(first)
}

pub fn global_mean_abs<W: Worth>(locals: &[IndexResult<W>]) -> Result<GlobalReport<W>> {
    let first = check_same_shape(locals)?;
    let count = W::from_int(locals.len() as i64);
    let mut mean_abs = BTreeMap::new();
    for t in first.values.keys() {
        let mut sum = W::zero();
        for l in locals {
            let v = l.values.get(t).ok_or_else(|| {
                Error::InvalidParameter(format!("coalition {t} missing from a local explanation"))
            })?;
            sum += v.abs();
        }
        mean_abs.insert(t.clone(), sum / count.clone());
    }
    Ok(GlobalReport {
        n: first.n,
        k: first.k,
        instances: locals.len(),
        mean_abs,
        presence_adjusted: None,
        presence_counts: None,
    })
}

/// Mean-absolute and presence-adjusted globals from locals computed on
/// `instances` (binary rows, same order as `locals`).
pub fn presence_adjusted_from_locals<W: Worth>(
    instances: &[&[f64]],
    locals: &[IndexResult<W>],
) -> Result<GlobalReport<W>> {
    if instances.len() != locals.len() {
        return Err(Error::DimensionMismatch {
            expected: locals.len(),
            found: instances.len(),
        });
    }
    if instances
        .iter()
        .any(|x| x.iter().any(|&v| v != 0.0 && v != 1.0))
    {
        return Err(Error::Dataset(
            "presence is defined only for binary features; the data contain other values".into(),
        ));
    }
    let mut report = global_mean_abs(locals)?;
    let count = W::from_int(locals.len() as i64);
    let mut adjusted = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for t in report.mean_abs.keys() {
        let mut sum = W::zero();
        let mut present = 0;
        for (x, l) in instances.iter().zip(locals) {
            let v = l.values[t].clone();
            if t.agents().all(|i| x[i] == 1.0) {
                present += 1;
                sum += v;
            } else {
                sum += -v;
            }
        }
        adjusted.insert(t.clone(), sum / count.clone());
        counts.insert(t.clone(), present);
    }
    report.presence_adjusted = Some(adjusted);
    report.presence_counts = Some(counts);
    Ok(report)
}

/// Exact presence-adjusted global joint Shapley values over every row of a
/// binary dataset.
pub fn presence_adjusted_global<W: Worth>(
    model: &dyn Model,
    dataset: &Dataset,
    k: usize,
) -> Result<GlobalReport<W>> {
    if !dataset.is_binary() {
        return Err(Error::Dataset(
            "presence is defined only for binary features; the data contain other values".into(),
        ));
    }
    let rows: Vec<usize> = (0..dataset.len()).collect();
    let locals = explain_instances_exact::<W>(model, dataset, &rows, k)?;
    let instances: Vec<&[f64]> = dataset.rows().iter().map(Vec::as_slice).collect();
    presence_adjusted_from_locals(&instances, &locals)
}

/// Largest feature count for [`additive_decomposition_check`].
pub const DECOMPOSITION_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub feature: usize,
    /// Presence-adjusted global value of `{feature}` over `{0,1}^n`, `k = n`.
    pub measured: Rational,
    /// Value implied by `f = g(x_feature) + h(rest)`.
    pub predicted: Rational,
    pub residual: Rational,
    pub accepted: bool,
}

/// Test whether `feature` enters `model` additively on `{0,1}^n`.
///
/// If `f = g(x_i) + h(rest)`, the presence-adjusted value of `{i}` with
/// `k = n` over the uniform cube is `½(g(1) − g(0)) Σ_{s<n} C(n−1,s) q_s`.
/// `g(1) − g(0)` is read off at the reference point `rest = 0`, i.e.
/// `f(e_i) − f(0)`; the decomposition is accepted when the measured value
/// is within `tolerance` of the prediction.
pub fn additive_decomposition_check(
    model: &dyn Model,
    n: usize,
    feature: usize,
    tolerance: f64,
) -> Result<DecompositionReport> {
    if n == 0 || n > DECOMPOSITION_MAX_N {
        return Err(Error::UnsupportedAgentCount {
            n,
            max: DECOMPOSITION_MAX_N,
        });
    }
    if feature >= n {
        return Err(Error::AgentOutOfRange { agent: feature, n });
    }
    model.accepts(n)?;
    let cube = Dataset::binary_product_space(n)?;
    let f: Vec<Rational> = predict_rows(model, cube.rows())?
        .into_iter()
        .map(Rational::from_f64)
        .collect::<Result<_>>()?;
    let q = compute_q(n, n)?;

    // a[p]: mean of f over the subcube fixed by the ternary code p
    // (digit 0 or 1 pins the feature, digit 2 leaves it free)
    let pow3: Vec<usize> = (0..=n).map(|i| 3usize.pow(i as u32)).collect();
    let half = Rational::new(1.into(), 2.into());
    let mut a: Vec<Rational> = Vec::with_capacity(pow3[n]);
    for p in 0..pow3[n] {
        let mut rest = p;
        let mut point = 0usize;
        let mut free = None;
        for (i, &w) in pow3[..n].iter().enumerate() {
            match rest % 3 {
                1 => point |= 1 << i,
                2 if free.is_none() => free = Some(w),
                _ => {}
            }
            rest /= 3;
        }
        let value = match free {
            None => f[point].clone(),
            Some(w) => (a[p - 2 * w].clone() + a[p - w].clone()) * half.clone(),
        };
        a.push(value);
    }

    let bit = 1usize << feature;
    let others = ((1usize << n) - 1) & !bit;
    let weights: Vec<Rational> = q.q().to_vec();
    let mut measured = Rational::from_int(0);
    for x in 0..1usize << n {
        let code = |s: usize| -> usize {
            (0..n)
                .map(|j| {
                    if s >> j & 1 == 1 {
                        (x >> j & 1) * pow3[j]
                    } else {
                        2 * pow3[j]
                    }
                })
                .sum()
        };
        let mut phi = Rational::from_int(0);
        let mut s = others;
        loop {
            let term = a[code(s | bit)].clone() - a[code(s)].clone();
            phi += weights[s.count_ones() as usize].clone() * term;
            if s == 0 {
                break;
            }
            s = (s - 1) & others;
        }
        if x & bit != 0 {
            measured += phi;
        } else {
            measured += -phi;
        }
    }
    measured /= Rational::from_int(1i64 << n);

    let e_i: Vec<f64> = (0..n)
        .map(|j| if j == feature { 1.0 } else { 0.0 })
        .collect();
    let jump = Rational::from_f64(model.predict(&e_i)?)?
        - Rational::from_f64(model.predict(&vec![0.0; n])?)?;
    let mass: Rational = (0..n)
        .map(|s| Rational::from_integer(binomial(n - 1, s)) * weights[s].clone())
        .sum();
    let predicted = half * jump * mass;
    let residual = (measured.clone() - predicted.clone()).abs();
    let accepted = residual.to_f64() <= tolerance;
    Ok(DecompositionReport {
        feature,
        measured,
        predicted,
        residual,
        accepted,
    })
}

/// Features whose value never changes the model's output when swapped for
/// any other value of that column seen in the dataset, starting from each
/// dataset row.
pub fn probe_unread_features(model: &dyn Model, dataset: &Dataset) -> Result<Vec<usize>> {
    model.accepts(dataset.n_features())?;
    let mut unread = Vec::new();
    for i in 0..dataset.n_features() {
        let mut values: Vec<f64> = dataset.rows().iter().map(|r| r[i]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut read = false;
        'rows: for row in dataset.rows() {
            let base = model.predict(row)?;
            let mut probe = row.clone();
            for &v in &values {
                probe[i] = v;
                if model.predict(&probe)?.to_bits() != base.to_bits() {
                    read = true;
                    break 'rows;
                }
            }
        }
        if !read {
            unread.push(i);
        }
    }
    Ok(unread)
}
