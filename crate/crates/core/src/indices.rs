//! Exact joint Shapley values and the comparison indices.
//!
//! All computations first tabulate the game once (see [`WorthTable`]) and
//! then run on bitmasks. Work for distinct coalitions `T` runs in parallel
//! when the game allows it; results are assembled in a fixed order.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coalition::{full_mask, masks_up_to, submasks, Coalition};
use crate::coefficients::{compute_q, shapley_weights, CoefficientTable};
use crate::combinatorics::{binomial, factorial};
use crate::error::{Error, Result};
use crate::game::{permute_game, Game, Permutation, WorthTable};
use crate::worth::{Rational, Worth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndexKind {
    JointShapley,
    Shapley,
    ShapleyInteraction,
    GeneralisedShapley,
    AddedValue,
    ShapleyTaylor,
}

impl IndexKind {
    pub const ALL: [IndexKind; 6] = [
        IndexKind::JointShapley,
        IndexKind::Shapley,
        IndexKind::ShapleyInteraction,
        IndexKind::GeneralisedShapley,
        IndexKind::AddedValue,
        IndexKind::ShapleyTaylor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::JointShapley => "joint_shapley",
            IndexKind::Shapley => "shapley",
            IndexKind::ShapleyInteraction => "shapley_interaction",
            IndexKind::GeneralisedShapley => "generalised_shapley",
            IndexKind::AddedValue => "added_value",
            IndexKind::ShapleyTaylor => "shapley_taylor",
        }
    }

    /// Short CLI spelling: `joint`, `shapley`, `si`, `gs`, `av`, `st`.
    pub fn short(self) -> &'static str {
        match self {
            IndexKind::JointShapley => "joint",
            IndexKind::Shapley => "shapley",
            IndexKind::ShapleyInteraction => "si",
            IndexKind::GeneralisedShapley => "gs",
            IndexKind::AddedValue => "av",
            IndexKind::ShapleyTaylor => "st",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        IndexKind::ALL
            .into_iter()
            .find(|k| k.short() == s || k.name() == s)
            .ok_or_else(|| Error::Unknown {
                what: "index",
                name: s.to_string(),
            })
    }

    /// Whether the index is defined only up to an order of explanation.
    pub fn uses_order(self) -> bool {
        matches!(self, IndexKind::JointShapley | IndexKind::ShapleyTaylor)
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Exact,
    Sampled { seed: u64, iterations: u64 },
}

/// Values of one index over a family of coalitions.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexResult<W> {
    pub kind: IndexKind,
    pub n: usize,
    /// Order of explanation for indices that use one.
    pub k: Option<usize>,
    pub values: BTreeMap<Coalition, W>,
    pub mode: Mode,
    /// Standard error of each sampled estimate.
    pub std_errors: Option<BTreeMap<Coalition, f64>>,
}

impl<W: Worth> IndexResult<W> {
    fn exact(kind: IndexKind, n: usize, k: Option<usize>, values: BTreeMap<Coalition, W>) -> Self {
        IndexResult {
            kind,
            n,
            k,
            values,
            mode: Mode::Exact,
            std_errors: None,
        }
    }

    pub fn get(&self, s: &Coalition) -> Option<&W> {
        self.values.get(s)
    }

    /// Lookup by agent-list key, e.g. `"0,2"`.
    pub fn get_key(&self, key: &str) -> Option<&W> {
        let c = Coalition::parse_key(key, self.n).ok()?;
        self.values.get(&c)
    }

    pub fn total(&self) -> W {
        self.values.values().cloned().sum()
    }

    pub fn to_f64(&self) -> IndexResult<f64> {
        IndexResult {
            kind: self.kind,
            n: self.n,
            k: self.k,
            values: self
                .values
                .iter()
                .map(|(c, v)| (c.clone(), v.to_f64()))
                .collect(),
            mode: self.mode.clone(),
            std_errors: self.std_errors.clone(),
        }
    }
}

fn as_worths<W: Worth>(values: &[Rational]) -> Vec<W> {
    values.iter().map(W::from_ratio).collect()
}

fn run_per_mask<W, F>(masks: &[u64], parallel: bool, f: F) -> Vec<W>
where
    W: Worth,
    F: Fn(u64) -> W + Sync + Send,
{
    if parallel {
        masks.par_iter().map(|&m| f(m)).collect()
    } else {
        masks.iter().map(|&m| f(m)).collect()
    }
}

fn assemble<W: Worth>(n: usize, masks: &[u64], values: Vec<W>) -> BTreeMap<Coalition, W> {
    masks
        .iter()
        .zip(values)
        .map(|(&m, v)| (Coalition::from_bits_unchecked(m, n), v))
        .collect()
}

/// `Σ_{L⊆T} (−1)^{t−l} v(S ∪ L)`.
fn discrete_derivative<W: Worth>(table: &WorthTable<W>, t: u64, s: u64) -> W {
    let t_size = t.count_ones();
    let mut acc = W::zero();
    for l in submasks(t) {
        let v = table.get(s | l).clone();
        if (t_size - l.count_ones()).is_multiple_of(2) {
            acc += v;
        } else {
            acc += -v;
        }
    }
    acc
}

/// Sum `f(S)` over `S ⊆ N∖T`, bucketed by `|S|`.
fn sum_by_size<W: Worth>(n: usize, t: u64, f: impl Fn(u64) -> W) -> Vec<W> {
    let comp = full_mask(n) & !t;
    let mut buckets = vec![W::zero(); n - t.count_ones() as usize + 1];
    for s in submasks(comp) {
        buckets[s.count_ones() as usize] += f(s);
    }
    buckets
}

fn dot<W: Worth>(weights: &[W], buckets: Vec<W>) -> W {
    buckets
        .into_iter()
        .zip(weights)
        .map(|(b, w)| w.clone() * b)
        .sum()
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidOrder { k, n });
    }
    Ok(())
}

/// Exact joint Shapley values for every `∅ ≠ T`, `|T| ≤ k`.
///
/// Enumerates the disjoint pairs `(T, S ⊆ N∖T)` with `|T| ≤ k`, i.e.
/// `Σ_{t≤k} C(n,t) 2^{n−t}` marginal evaluations, which is at most
/// `min(3^n, 2^n n^k)`.
pub fn joint_shapley_exact<G: Game>(game: &G, k: usize) -> Result<IndexResult<G::Worth>> {
    check_k(game.n(), k)?;
    let table = WorthTable::tabulate(game)?;
    let coeffs = compute_q(game.n(), k)?;
    Ok(joint_shapley_from_table(
        &table,
        &coeffs,
        game.parallel_safe(),
    ))
}

pub fn joint_shapley_from_table<W: Worth>(
    table: &WorthTable<W>,
    coeffs: &CoefficientTable,
    parallel: bool,
) -> IndexResult<W> {
    let n = table.n();
    let k = coeffs.k();
    let q: Vec<W> = as_worths(coeffs.q());
    let masks = masks_up_to(n, k);
    let values = run_per_mask(&masks, parallel, |t| {
        let buckets = sum_by_size(n, t, |s| table.get(s | t).clone() - table.get(s).clone());
        dot(&q, buckets)
    });
    IndexResult::exact(
        IndexKind::JointShapley,
        n,
        Some(k),
        assemble(n, &masks, values),
    )
}

/// Classical Shapley value of every agent.
pub fn shapley<G: Game>(game: &G) -> Result<IndexResult<G::Worth>> {
    let table = WorthTable::tabulate(game)?;
    Ok(shapley_from_table(&table))
}

pub fn shapley_from_table<W: Worth>(table: &WorthTable<W>) -> IndexResult<W> {
    let n = table.n();
    let weights: Vec<W> = as_worths(&shapley_weights(n));
    let masks: Vec<u64> = (0..n).map(|i| 1u64 << i).collect();
    let values = run_per_mask(&masks, true, |t| {
        dot(
            &weights,
            sum_by_size(n, t, |s| table.get(s | t).clone() - table.get(s).clone()),
        )
    });
    IndexResult::exact(IndexKind::Shapley, n, Some(1), assemble(n, &masks, values))
}

pub fn shapley_interaction<G: Game>(game: &G) -> Result<IndexResult<G::Worth>> {
    Ok(shapley_interaction_from_table(&WorthTable::tabulate(game)?))
}

pub fn shapley_interaction_from_table<W: Worth>(table: &WorthTable<W>) -> IndexResult<W> {
    let n = table.n();
    let masks = masks_up_to(n, n);
    let values = run_per_mask(&masks, true, |t| {
        let ts = t.count_ones() as usize;
        let weights: Vec<W> = (0..=n - ts)
            .map(|s| {
                W::from_ratio(&Rational::new(
                    BigInt::from(1),
                    BigInt::from(n - ts + 1) * binomial(n - ts, s),
                ))
            })
            .collect();
        dot(
            &weights,
            sum_by_size(n, t, |s| discrete_derivative(table, t, s)),
        )
    });
    IndexResult::exact(
        IndexKind::ShapleyInteraction,
        n,
        None,
        assemble(n, &masks, values),
    )
}

pub fn generalised_shapley<G: Game>(game: &G) -> Result<IndexResult<G::Worth>> {
    Ok(generalised_shapley_from_table(&WorthTable::tabulate(game)?))
}

pub fn generalised_shapley_from_table<W: Worth>(table: &WorthTable<W>) -> IndexResult<W> {
    let n = table.n();
    let masks = masks_up_to(n, n);
    let values = run_per_mask(&masks, true, |t| {
        let ts = t.count_ones() as usize;
        let weights: Vec<W> = (0..=n - ts)
            .map(|s| {
                W::from_ratio(&Rational::new(
                    factorial(n - s - ts) * factorial(s),
                    factorial(n - ts + 1),
                ))
            })
            .collect();
        dot(
            &weights,
            sum_by_size(n, t, |s| table.get(s | t).clone() - table.get(s).clone()),
        )
    });
    IndexResult::exact(
        IndexKind::GeneralisedShapley,
        n,
        None,
        assemble(n, &masks, values),
    )
}

pub fn added_value<G: Game>(game: &G) -> Result<IndexResult<G::Worth>> {
    Ok(added_value_from_table(&WorthTable::tabulate(game)?))
}

/// `v(T) − Σ_{i∈T} 2^{1−n} Σ_{S∋i} ψ_i(v restricted to S)`.
pub fn added_value_from_table<W: Worth>(table: &WorthTable<W>) -> IndexResult<W> {
    let n = table.n();
    let full = full_mask(n);
    // weight[s][c] = c!(s−c−1)!/s!, only s ≥ 1 occurs since i ∈ S
    let weight: Vec<Vec<W>> = (0..=n)
        .map(|s| {
            (0..s)
                .map(|c| {
                    W::from_ratio(&Rational::new(
                        factorial(c) * factorial(s - c - 1),
                        factorial(s),
                    ))
                })
                .collect()
        })
        .collect();
    let scale = W::from_ratio(&Rational::new(
        BigInt::from(1),
        BigInt::from(1u64) << (n - 1),
    ));
    let agents: Vec<u64> = (0..n).map(|i| 1u64 << i).collect();
    let average_marginals = run_per_mask(&agents, true, |i| {
        let mut total = W::zero();
        for rest in submasks(full & !i) {
            let s = (rest | i).count_ones() as usize;
            for c in submasks(rest) {
                let marginal = table.get(c | i).clone() - table.get(c).clone();
                total += weight[s][c.count_ones() as usize].clone() * marginal;
            }
        }
        scale.clone() * total
    });
    let masks = masks_up_to(n, n);
    let values = masks
        .iter()
        .map(|&t| {
            let mut v = table.get(t).clone();
            for (i, avg) in average_marginals.iter().enumerate() {
                if t >> i & 1 == 1 {
                    v = v - avg.clone();
                }
            }
            v
        })
        .collect();
    IndexResult::exact(IndexKind::AddedValue, n, None, assemble(n, &masks, values))
}

pub fn shapley_taylor<G: Game>(game: &G, k: usize) -> Result<IndexResult<G::Worth>> {
    check_k(game.n(), k)?;
    Ok(shapley_taylor_from_table(&WorthTable::tabulate(game)?, k))
}

pub fn shapley_taylor_from_table<W: Worth>(table: &WorthTable<W>, k: usize) -> IndexResult<W> {
    let n = table.n();
    let masks = masks_up_to(n, k);
    let top_weights: Vec<W> = (0..n)
        .map(|s| {
            W::from_ratio(&Rational::new(
                BigInt::from(k),
                BigInt::from(n) * binomial(n - 1, s),
            ))
        })
        .collect();
    let values = run_per_mask(&masks, true, |t| {
        if (t.count_ones() as usize) < k {
            discrete_derivative(table, t, 0)
        } else {
            dot(
                &top_weights,
                sum_by_size(n, t, |s| discrete_derivative(table, t, s)),
            )
        }
    });
    IndexResult::exact(
        IndexKind::ShapleyTaylor,
        n,
        Some(k),
        assemble(n, &masks, values),
    )
}

/// Axiom checks on an exact joint Shapley result.
#[derive(Debug, Clone)]
pub struct AxiomReport<W> {
    /// `Σ_T φ_T − v(N)`.
    pub efficiency_residual: W,
    pub efficiency_ok: bool,
    /// Coalitions (|T| ≤ k) detected null by enumeration.
    pub null_coalitions: Vec<Coalition>,
    pub null_violations: Vec<(Coalition, W)>,
    /// Pair detection is enumerated only for `n ≤ SYMMETRY_MAX_N`.
    pub symmetry_checked: bool,
    pub symmetric_pairs: Vec<(Coalition, Coalition)>,
    pub symmetry_violations: Vec<(Coalition, Coalition)>,
    pub anonymity_permutations: Vec<Permutation>,
    pub anonymity_violations: Vec<(Permutation, Coalition)>,
}

impl<W: Worth> AxiomReport<W> {
    pub fn passed(&self) -> bool {
        self.efficiency_ok
            && self.null_violations.is_empty()
            && self.symmetry_violations.is_empty()
            && self.anonymity_violations.is_empty()
    }

    /// One line per axiom.
    pub fn lines(&self) -> Vec<String> {
        let status = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut out = vec![
            format!(
                "JEF {}: efficiency residual {}",
                status(self.efficiency_ok),
                self.efficiency_residual
            ),
            format!(
                "JNU {}: {} null coalition(s), {} violation(s)",
                status(self.null_violations.is_empty()),
                self.null_coalitions.len(),
                self.null_violations.len()
            ),
        ];
        if self.symmetry_checked {
            out.push(format!(
                "JSY {}: {} symmetric pair(s), {} violation(s)",
                status(self.symmetry_violations.is_empty()),
                self.symmetric_pairs.len(),
                self.symmetry_violations.len()
            ));
        } else {
            out.push("JSY SKIP: pair enumeration limited to small n".to_string());
        }
        out.push(format!(
            "JAN {}: {} permutation(s), {} violation(s)",
            status(self.anonymity_violations.is_empty()),
            self.anonymity_permutations.len(),
            self.anonymity_violations.len()
        ));
        out
    }
}

pub const SYMMETRY_MAX_N: usize = 8;

fn all_masks(mask: u64) -> impl Iterator<Item = u64> {
    submasks(mask)
}

fn is_null<W: Worth>(table: &WorthTable<W>, t: u64) -> bool {
    let comp = full_mask(table.n()) & !t;
    all_masks(comp).all(|s| table.get(s | t).approx_eq(table.get(s)))
}

/// The three hypotheses of joint symmetry for `(T, T')`.
fn jointly_symmetric<W: Worth>(table: &WorthTable<W>, t: u64, u: u64) -> bool {
    let full = full_mask(table.n());
    let both = t | u;
    let equal_joins = all_masks(full & !both).all(|s| table.get(s | t).approx_eq(table.get(s | u)));
    let t_idle = all_masks(full & !t)
        .filter(|s| s & u != 0)
        .all(|s| table.get(s | t).approx_eq(table.get(s)));
    let u_idle = all_masks(full & !u)
        .filter(|s| s & t != 0)
        .all(|s| table.get(s | u).approx_eq(table.get(s)));
    equal_joins && t_idle && u_idle
}

/// Check efficiency, joint null, joint symmetry and joint anonymity (on
/// `anonymity_trials` random permutations drawn from `seed`).
pub fn check_axioms<G: Game>(
    result: &IndexResult<G::Worth>,
    game: &G,
    anonymity_trials: usize,
    seed: u64,
) -> Result<AxiomReport<G::Worth>> {
    if result.kind != IndexKind::JointShapley || result.mode != Mode::Exact {
        return Err(Error::InvalidParameter(
            "axiom checks need an exact joint Shapley result".into(),
        ));
    }
    if result.n != game.n() {
        return Err(Error::DimensionMismatch {
            expected: game.n(),
            found: result.n,
        });
    }
    let n = game.n();
    let k = result.k.unwrap_or(n);
    let table = WorthTable::tabulate(game)?;
    let masks = masks_up_to(n, k);
    let value = |m: u64| {
        result
            .get(&Coalition::from_bits_unchecked(m, n))
            .cloned()
            .unwrap_or_else(G::Worth::zero)
    };

    let efficiency_residual = result.total() - table.full().clone();
    let efficiency_ok = efficiency_residual.is_zero_worth();

    let null_coalitions: Vec<u64> = masks
        .iter()
        .copied()
        .filter(|&t| is_null(&table, t))
        .collect();
    let null_violations = null_coalitions
        .iter()
        .filter(|&&t| !value(t).is_zero_worth())
        .map(|&t| (Coalition::from_bits_unchecked(t, n), value(t)))
        .collect();

    let symmetry_checked = n <= SYMMETRY_MAX_N;
    let mut symmetric_pairs = Vec::new();
    let mut symmetry_violations = Vec::new();
    if symmetry_checked {
        for (a, &t) in masks.iter().enumerate() {
            for &u in &masks[a + 1..] {
                if jointly_symmetric(&table, t, u) {
                    let pair = (
                        Coalition::from_bits_unchecked(t, n),
                        Coalition::from_bits_unchecked(u, n),
                    );
                    if !value(t).approx_eq(&value(u)) {
                        symmetry_violations.push(pair.clone());
                    }
                    symmetric_pairs.push(pair);
                }
            }
        }
    }

    let coeffs = compute_q(n, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anonymity_permutations = Vec::new();
    let mut anonymity_violations = Vec::new();
    for _ in 0..anonymity_trials {
        let sigma = Permutation::random(n, &mut rng);
        let permuted = WorthTable::tabulate(&permute_game(&table, &sigma)?)?;
        let moved = joint_shapley_from_table(&permuted, &coeffs, true);
        for &t in &masks {
            let c = Coalition::from_bits_unchecked(t, n);
            let image = sigma.apply_coalition(&c)?;
            let ok = moved.get(&image).is_some_and(|v| v.approx_eq(&value(t)));
            if !ok {
                anonymity_violations.push((sigma.clone(), c));
            }
        }
        anonymity_permutations.push(sigma);
    }

    Ok(AxiomReport {
        efficiency_residual,
        efficiency_ok,
        null_coalitions: null_coalitions
            .into_iter()
            .map(|t| Coalition::from_bits_unchecked(t, n))
            .collect(),
        null_violations,
        symmetry_checked,
        symmetric_pairs,
        symmetry_violations,
        anonymity_permutations,
        anonymity_violations,
    })
}
