#![allow(dead_code)]

use joint_shapley::worth::rational;
use joint_shapley::{Coalition, Rational, TableGame};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::Rng;

/// Exact expectation of the arrival process: from the arrived set `B`, the
/// next coalition is uniform over the non-empty subsets of `N∖B` of size at
/// most `k`; a coalition's value is the expected worth it adds on arrival.
pub fn arrival_oracle(values: &[Rational], n: usize, k: usize) -> Vec<(u64, Rational)> {
    let full = (1u64 << n) - 1;
    let mut reach = vec![Rational::zero(); 1 << n];
    reach[0] = Rational::one();
    let mut credit = vec![Rational::zero(); 1 << n];
    for b in 0..=full {
        if reach[b as usize].is_zero() || b == full {
            continue;
        }
        let rest = full & !b;
        let moves: Vec<u64> = subsets(rest)
            .into_iter()
            .filter(|&a| a != 0 && a.count_ones() as usize <= k)
            .collect();
        let p = reach[b as usize].clone() / Rational::from_integer(BigInt::from(moves.len()));
        for a in moves {
            let gain = values[(b | a) as usize].clone() - values[b as usize].clone();
            credit[a as usize] += p.clone() * gain;
            reach[(b | a) as usize] += p.clone();
        }
    }
    (1..=full)
        .filter(|m| m.count_ones() as usize <= k)
        .map(|m| (m, credit[m as usize].clone()))
        .collect()
}

pub fn subsets(mask: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut s = mask;
    loop {
        out.push(s);
        if s == 0 {
            break;
        }
        s = (s - 1) & mask;
    }
    out
}

pub fn random_rational<R: Rng>(rng: &mut R) -> Rational {
    rational(rng.gen_range(-20..=20), rng.gen_range(1..=6))
}

pub fn random_values<R: Rng>(n: usize, rng: &mut R) -> Vec<Rational> {
    (0..1u64 << n)
        .map(|m| {
            if m == 0 {
                Rational::zero()
            } else {
                random_rational(rng)
            }
        })
        .collect()
}

pub fn table(n: usize, values: &[Rational]) -> TableGame<Rational> {
    TableGame::from_fn(n, |m| values[m as usize].clone()).unwrap()
}

pub fn coalition(mask: u64, n: usize) -> Coalition {
    Coalition::from_bits(mask, n).unwrap()
}

/// Three features uniform on (0,1), optionally with `x2 = 1 − x1`. Uniform
/// draws are multiples of 2^-53, so `1 − x1` and `x1 + (1 − x1)` are exact.
pub fn uniform_dataset(
    rows: usize,
    correlated: bool,
    seed: u64,
) -> joint_shapley::attribution::Dataset {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows)
        .map(|_| {
            let x1: f64 = rng.gen();
            let x2: f64 = rng.gen();
            let x3: f64 = rng.gen();
            vec![x1, if correlated { 1.0 - x1 } else { x2 }, x3]
        })
        .collect();
    joint_shapley::attribution::Dataset::new(vec!["x1".into(), "x2".into(), "x3".into()], data)
        .unwrap()
}

/// Exact mean-absolute global values over every row of `data`.
pub fn mean_abs_global(
    model: &dyn joint_shapley::Model,
    data: &joint_shapley::attribution::Dataset,
    k: usize,
) -> std::collections::BTreeMap<Coalition, Rational> {
    use joint_shapley::attribution::{explain_instances_exact, global_mean_abs};
    let rows: Vec<usize> = (0..data.len()).collect();
    let locals = explain_instances_exact::<Rational>(model, data, &rows, k).unwrap();
    global_mean_abs(&locals).unwrap().mean_abs
}

/// The seven Bernoulli(0.5) presence-adjusted values for `{0,1}^3`, `k = 3`,
/// in the order x1, x2, x3, x1x2, x1x3, x2x3, x1x2x3.
pub const BERNOULLI_ORDER: [&str; 7] = ["0", "1", "2", "0,1", "0,2", "1,2", "0,1,2"];

/// `(name, model, seven p/q pairs)`.
pub type BernoulliCase = (
    &'static str,
    joint_shapley::model::BuiltinModel,
    [(i64, i64); 7],
);

pub fn bernoulli_expected() -> Vec<BernoulliCase> {
    use joint_shapley::model::BuiltinModel;
    vec![
        (
            "f1",
            BuiltinModel::Select(0),
            [(5, 21), (0, 1), (0, 1), (1, 21), (1, 21), (0, 1), (1, 56)],
        ),
        (
            "f2",
            BuiltinModel::Sum(0, 1),
            [(5, 21), (5, 21), (0, 1), (2, 21), (1, 21), (1, 21), (1, 28)],
        ),
        (
            "f4",
            BuiltinModel::Product(0, 1),
            [
                (5, 42),
                (5, 42),
                (0, 1),
                (1, 14),
                (1, 42),
                (1, 42),
                (3, 112),
            ],
        ),
    ]
}
