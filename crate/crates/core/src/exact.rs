//! Exact powers of a floating-point matrix.
//!
//! A finite `f64` is `m * 2^e` for integers `m, e`, so any matrix of them is
//! `2^s Z` with `Z` integer and `s` the smallest exponent present. Powers
//! `W^k = 2^{ks} Z^k` then need only big-integer products.

use std::ops::Range;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{Float, Signed, ToPrimitive, Zero};

pub(crate) struct DyadicPowers {
    n: usize,
    scale_exp: i64,
    /// `powers[k - 1]` is `Z^k`, row-major.
    powers: Vec<Vec<BigInt>>,
}

impl DyadicPowers {
    pub(crate) fn new(w: &DMatrix<f64>, count: usize) -> Self {
        let n = w.nrows();
        let decoded: Vec<(u64, i16, i8)> = (0..n * n)
            .map(|idx| Float::integer_decode(w[(idx / n, idx % n)]))
            .collect();
        let scale_exp = decoded
            .iter()
            .filter(|(m, _, _)| *m != 0)
            .map(|&(_, e, _)| e as i64)
            .min()
            .unwrap_or(0);
        let base: Vec<BigInt> = decoded
            .iter()
            .map(|&(m, e, sign)| {
                if m == 0 {
                    BigInt::zero()
                } else {
                    let v = BigInt::from(m) << ((e as i64 - scale_exp) as usize);
                    if sign < 0 {
                        -v
                    } else {
                        v
                    }
                }
            })
            .collect();
        let mut powers: Vec<Vec<BigInt>> = Vec::with_capacity(count);
        for k in 0..count {
            if k == 0 {
                powers.push(base.clone());
                continue;
            }
            let prev = &powers[k - 1];
            let mut next = vec![BigInt::zero(); n * n];
            for r in 0..n {
                for m in 0..n {
                    let a = &base[r * n + m];
                    if a.is_zero() {
                        continue;
                    }
                    for c in 0..n {
                        let b = &prev[m * n + c];
                        if !b.is_zero() {
                            next[r * n + c] += a * b;
                        }
                    }
                }
            }
            powers.push(next);
        }
        DyadicPowers { n, scale_exp, powers }
    }

    pub(crate) fn block_is_zero(&self, k: usize, rows: Range<usize>, cols: Range<usize>) -> bool {
        let p = &self.powers[k - 1];
        rows.into_iter()
            .all(|r| cols.clone().all(|c| p[r * self.n + c].is_zero()))
    }

    /// Frobenius norm of a block of `W^k`, rounded to `f64`.
    pub(crate) fn frobenius(&self, k: usize, rows: Range<usize>, cols: Range<usize>) -> f64 {
        let p = &self.powers[k - 1];
        let mut sq = BigInt::zero();
        for r in rows {
            for c in cols.clone() {
                let v = &p[r * self.n + c];
                sq += v * v;
            }
        }
        // sqrt(sq) * 2^{k s}, keeping everything in range.
        let (mant, exp) = to_f64_with_exp(&sq);
        let (mant, exp) = if exp % 2 != 0 {
            (mant * 2.0, exp - 1)
        } else {
            (mant, exp)
        };
        scale_pow2(mant.sqrt(), exp / 2 + k as i64 * self.scale_exp)
    }
}

/// `v ~= mant * 2^exp` with `mant` a modest `f64`.
fn to_f64_with_exp(v: &BigInt) -> (f64, i64) {
    let bits = v.bits() as i64;
    if bits <= 64 {
        return (v.to_f64().unwrap_or(0.0), 0);
    }
    let shift = bits - 64;
    let top: BigInt = v.abs() >> (shift as usize);
    (top.to_f64().unwrap_or(0.0), shift)
}

fn scale_pow2(mut x: f64, mut exp: i64) -> f64 {
    while exp > 0 {
        let step = exp.min(1000);
        x *= 2f64.powi(step as i32);
        exp -= step;
    }
    while exp < 0 {
        let step = (-exp).min(1000);
        x *= 2f64.powi(-(step as i32));
        exp += step;
    }
    x
}
