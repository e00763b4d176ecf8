//! Arrival-weight coefficients `q_0..q_{n-1}` of the joint Shapley value.
//!
//! `q_r` weights the marginal contribution of a coalition that arrives when
//! `r` agents are already present. The table is computed exactly by forward
//! recursion; a closed form exists for `k = n`.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::coalition::{full_mask, submasks, Coalition};
use crate::combinatorics::{binomial, binomial_ratio, factorial, BinomialTable};
use crate::error::{Error, Result};
use crate::worth::{ratio_to_f64, Rational};

/// Exact coefficient system for `n` agents and order of explanation `k`.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    n: usize,
    k: usize,
    q: Vec<Rational>,
    // q_r = numer[r] / (outflow[0] ⋯ outflow[r]) when built by recursion
    scaled: Option<(Vec<BigInt>, Vec<BigInt>)>,
}

impl PartialEq for CoefficientTable {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.k == other.k && self.q == other.q
    }
}

/// Rational operations performed while building a table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    /// Big-integer additions spent on the truncated Pascal table.
    pub binomial_adds: u64,
    /// Rational additions, multiplications and divisions in the recursion.
    pub rational_ops: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.binomial_adds + self.rational_ops
    }
}

fn check_order(n: usize, k: usize) -> Result<()> {
    if n == 0 || k == 0 || k > n {
        return Err(Error::InvalidOrder { k, n });
    }
    Ok(())
}

pub fn compute_q(n: usize, k: usize) -> Result<CoefficientTable> {
    compute_q_counted(n, k).map(|(t, _)| t)
}

/// [`compute_q`] together with its arithmetic operation count.
pub fn compute_q_counted(n: usize, k: usize) -> Result<(CoefficientTable, OpCount)> {
    check_order(n, k)?;
    let binom = BinomialTable::new(n, k);
    let mut ops = OpCount {
        binomial_adds: ((n + 1) * (k + 1)) as u64,
        rational_ops: 0,
    };

    // D_r = Σ_{s=1}^{min(k,n−r)} C(n−r, s) is the outflow normaliser of
    // step r. Writing q_r = N_r / (D_0 ⋯ D_r) turns the recursion into the
    // integer Horner scheme N_r = Σ_s C(r,s) N_s Π_{j=s+1}^{r−1} D_j, so
    // each q_r needs a single reduction.
    let outflow = |r: usize| -> BigInt { (1..=k.min(n - r)).map(|s| binom.get(n - r, s)).sum() };
    let mut d: Vec<BigInt> = Vec::with_capacity(n);
    let mut numer: Vec<BigInt> = Vec::with_capacity(n);
    let mut q: Vec<Rational> = Vec::with_capacity(n);
    let mut product = BigInt::one();
    for r in 0..n {
        d.push(outflow(r));
        ops.rational_ops += k.min(n - r) as u64;
        let nr = if r == 0 {
            BigInt::one()
        } else {
            let lo = r.saturating_sub(k);
            let mut acc = BigInt::zero();
            for s in lo..r {
                if s > lo {
                    acc *= &d[s];
                }
                acc += binom.get_sym(r, s) * &numer[s];
                ops.rational_ops += 3;
            }
            acc
        };
        product *= &d[r];
        q.push(Rational::new(nr.clone(), product.clone()));
        ops.rational_ops += 2;
        numer.push(nr);
    }
    let scaled = Some((numer, d));
    Ok((CoefficientTable { n, k, q, scaled }, ops))
}

/// Closed form for `k = n`: `q_r = Σ_j C(r,j)(−2)^{r−j} / (2^{n−j} − 1)`.
pub fn closed_form_q(n: usize) -> Result<CoefficientTable> {
    check_order(n, n)?;
    let q = (0..n)
        .map(|r| {
            (0..=r)
                .map(|j| {
                    let sign_pow = num_traits::pow(BigInt::from(-2), r - j);
                    let denom = (BigInt::one() << (n - j)) - 1;
                    Rational::new(binomial(r, j) * sign_pow, denom)
                })
                .sum()
        })
        .collect();
    Ok(CoefficientTable {
        n,
        k: n,
        q,
        scaled: None,
    })
}

/// Classical Shapley weights `s!(n−s−1)!/n!` for `s = 0..n−1`.
pub fn shapley_weights(n: usize) -> Vec<Rational> {
    let nf = factorial(n);
    (0..n)
        .map(|s| Rational::new(factorial(s) * factorial(n - s - 1), nf.clone()))
        .collect()
}

impl CoefficientTable {
    /// Wrap an arbitrary sequence without validation; use
    /// [`verify_coefficient_identities`] to check it.
    pub fn from_parts(n: usize, k: usize, q: Vec<Rational>) -> Result<Self> {
        check_order(n, k)?;
        if q.len() != n {
            return Err(Error::InvalidParameter(format!(
                "coefficient table needs {n} entries, got {}",
                q.len()
            )));
        }
        Ok(CoefficientTable {
            n,
            k,
            q,
            scaled: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> &[Rational] {
        &self.q
    }

    pub fn q_f64(&self) -> Vec<f64> {
        self.q.iter().map(ratio_to_f64).collect()
    }

    /// `Σ_{j=0}^{n−t} C(n−t, j) q_j`: total arrival weight seen by a
    /// coalition of size `t`.
    pub fn arrival_mass(&self, t: usize) -> Rational {
        let m = self.n - t.min(self.n);
        (0..=m).map(|j| binomial_ratio(m, j) * &self.q[j]).sum()
    }
}

/// Law of the number of agents already present when a coalition of size `t`
/// arrives.
#[derive(Debug, Clone)]
pub struct ArrivalSizeDistribution {
    pub n: usize,
    pub t: usize,
    /// `P(X = i)` for `i = 0..=n−t`, normalised exactly and then rounded.
    pub probs: Vec<f64>,
    /// Normaliser `Σ_j C(n−t, j) q_j`, rounded once from its exact value.
    pub scale: f64,
    // exact law: P(X = i) = weights[i] / total, normaliser = total / denom
    weights: Vec<BigInt>,
    total: BigInt,
    denom: BigInt,
}

impl ArrivalSizeDistribution {
    /// `P(X = i)` as reduced rationals.
    pub fn exact_probs(&self) -> Vec<Rational> {
        self.weights
            .iter()
            .map(|w| Rational::new(w.clone(), self.total.clone()))
            .collect()
    }

    pub fn exact_scale(&self) -> Rational {
        Rational::new(self.total.clone(), self.denom.clone())
    }
}

fn lcm(a: &BigInt, b: &BigInt) -> BigInt {
    use num_integer::Integer;
    a.lcm(b)
}

pub fn arrival_size_distribution(
    table: &CoefficientTable,
    t: usize,
) -> Result<ArrivalSizeDistribution> {
    if t == 0 || t > table.k {
        return Err(Error::CoalitionTooLarge {
            size: t,
            k: table.k,
        });
    }
    let m = table.n - t;
    let mut binom = Vec::with_capacity(m + 1);
    let mut c = BigInt::one();
    for i in 0..=m {
        binom.push(c.clone());
        c = c * (m - i) / (i + 1);
    }
    // integer weights over a common denominator, avoiding per-term reduction
    let (weights, denom) = match &table.scaled {
        Some((numer, outflow)) => {
            let mut weights = vec![BigInt::zero(); m + 1];
            let mut suffix = BigInt::one();
            for i in (0..=m).rev() {
                weights[i] = &binom[i] * &numer[i] * &suffix;
                suffix *= &outflow[i];
            }
            (weights, suffix)
        }
        None => {
            let denom = table.q[..=m]
                .iter()
                .fold(BigInt::one(), |acc, q| lcm(&acc, q.denom()));
            let weights = (0..=m)
                .map(|i| &binom[i] * table.q[i].numer() * (&denom / table.q[i].denom()))
                .collect();
            (weights, denom)
        }
    };
    let total: BigInt = weights.iter().sum();
    let probs = weights
        .iter()
        .map(|w| ratio_to_f64(&Rational::new_raw(w.clone(), total.clone())))
        .collect();
    let scale = ratio_to_f64(&Rational::new_raw(total.clone(), denom.clone()));
    Ok(ArrivalSizeDistribution {
        n: table.n,
        t,
        probs,
        scale,
        weights,
        total,
        denom,
    })
}

#[derive(Debug, Clone)]
pub struct CoefficientReport {
    /// `q_r` minus the value the recursion prescribes from `q_0..q_{r−1}`.
    pub recursion_residuals: Vec<Rational>,
    /// `Σ_{s=n−k}^{n−1} C(n,s) q_s`; should be exactly one.
    pub normalization: Rational,
    pub negative_entries: Vec<usize>,
    /// Whether the per-coalition balance identity was enumerated (n ≤ 10).
    pub balance_checked: bool,
    /// Coalitions `S` where the balance identity fails.
    pub balance_violations: Vec<Coalition>,
}

impl CoefficientReport {
    pub fn passed(&self) -> bool {
        self.recursion_residuals.iter().all(Zero::is_zero)
            && self.normalization.is_one()
            && self.negative_entries.is_empty()
            && self.balance_violations.is_empty()
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (r, res) in self.recursion_residuals.iter().enumerate() {
            if !res.is_zero() {
                out.push(format!("recursion residual at r={r}: {res}"));
            }
        }
        if !self.normalization.is_one() {
            out.push(format!(
                "normalization sum is {} (expected 1)",
                self.normalization
            ));
        }
        for r in &self.negative_entries {
            out.push(format!("q_{r} is negative"));
        }
        for s in &self.balance_violations {
            out.push(format!("balance identity fails at S={s}"));
        }
        out
    }
}

/// Largest `n` for which the per-coalition balance identity is enumerated.
pub const BALANCE_CHECK_MAX_N: usize = 10;

pub fn verify_coefficient_identities(table: &CoefficientTable) -> CoefficientReport {
    let (n, k, q) = (table.n, table.k, &table.q);

    let mut recursion_residuals = Vec::with_capacity(n);
    let first: BigInt = (1..=k).map(|i| binomial(n, i)).sum();
    recursion_residuals.push(&q[0] - Rational::new(BigInt::one(), first));
    for r in 1..n {
        let numer: Rational = (r.saturating_sub(k)..r)
            .map(|s| binomial_ratio(r, s) * &q[s])
            .sum();
        let denom: BigInt = (1..=k.min(n - r)).map(|s| binomial(n - r, s)).sum();
        recursion_residuals.push(&q[r] - numer / Rational::from_integer(denom));
    }

    let normalization: Rational = (n - k..n).map(|s| binomial_ratio(n, s) * &q[s]).sum();
    let negative_entries = q
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_negative())
        .map(|(r, _)| r)
        .collect();

    let balance_checked = n <= BALANCE_CHECK_MAX_N;
    let mut balance_violations = Vec::new();
    if balance_checked {
        let full = full_mask(n);
        for s in 1..=full {
            let size = s.count_ones() as usize;
            let mut lhs = Rational::zero();
            for t in submasks(s).filter(|&t| t != 0 && t.count_ones() as usize <= k) {
                lhs += &q[size - t.count_ones() as usize];
            }
            if s != full {
                let joiners = submasks(full & !s)
                    .filter(|&t| t != 0 && t.count_ones() as usize <= k)
                    .count();
                lhs -= &q[size] * Rational::from_integer(BigInt::from(joiners));
            }
            let delta = if s == full {
                Rational::one()
            } else {
                Rational::zero()
            };
            if lhs != delta {
                balance_violations.push(Coalition::from_bits_unchecked(s, n));
            }
        }
    }

    CoefficientReport {
        recursion_residuals,
        normalization,
        negative_entries,
        balance_checked,
        balance_violations,
    }
}
