use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::worth::Rational;

pub fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * i)
}

pub fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

pub fn binomial_ratio(n: usize, k: usize) -> Rational {
    Rational::from_integer(binomial(n, k))
}

/// Pascal's triangle for rows `0..=rows`, truncated to columns `0..=cols`.
/// Built with `O(rows · cols)` big-integer additions.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    cols: usize,
    rows: Vec<Vec<BigInt>>,
}

impl BinomialTable {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut table: Vec<Vec<BigInt>> = Vec::with_capacity(rows + 1);
        for m in 0..=rows {
            let width = cols.min(m) + 1;
            let mut row = Vec::with_capacity(width);
            for j in 0..width {
                let v = if j == 0 || j == m {
                    BigInt::one()
                } else {
                    let prev = &table[m - 1];
                    let left = &prev[j - 1];
                    match prev.get(j) {
                        Some(right) => left + right,
                        None => left.clone(),
                    }
                };
                row.push(v);
            }
            table.push(row);
        }
        BinomialTable { cols, rows: table }
    }

    /// C(m, j); requires `j <= cols` or `j > m`.
    pub fn get(&self, m: usize, j: usize) -> BigInt {
        if j > m {
            return BigInt::zero();
        }
        assert!(j <= self.cols, "column {j} beyond truncation {}", self.cols);
        self.rows[m][j].clone()
    }

    /// C(m, j) via symmetry, so either `j` or `m - j` may be within range.
    pub fn get_sym(&self, m: usize, j: usize) -> BigInt {
        if j > m {
            return BigInt::zero();
        }
        if j <= self.cols {
            self.get(m, j)
        } else {
            self.get(m, m - j)
        }
    }
}
