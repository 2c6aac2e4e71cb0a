//! Test-side oracles shared by the integration tests. Nothing here calls the
//! library's numerical code: each oracle recomputes its quantity from first
//! principles.
#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use privet::data::DataMatrix;

const LN2: f64 = std::f64::consts::LN_2;

/// `p` as `num / 2^k` exactly.
fn dyadic(p: f64) -> (BigUint, u64) {
    assert!(p > 0.0 && p < 1.0);
    let bits = p.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e2) = if exp == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    // p = mant * 2^e2 with e2 < 0
    let tz = mant.trailing_zeros() as i64;
    let mant = mant >> tz;
    let e2 = e2 + tz;
    assert!(e2 < 0);
    (BigUint::from(mant), (-e2) as u64)
}

/// `ln(x) - shift_down * ln 2` without forming large floating exponents.
fn ln_scaled(x: &BigUint, shift_down: u64) -> f64 {
    let bits = x.bits();
    let s = bits.saturating_sub(64);
    let top = (x >> s).to_u64().unwrap() as f64;
    top.ln() + (s as i64 - shift_down as i64) as f64 * LN2
}

/// `ln P[Bin(m, p) >= r]` by exact integer summation of the lower tail.
pub fn exact_ln_binomial_upper(m: u64, r: u64, p: f64) -> f64 {
    assert!(r >= 1 && r <= m);
    exact_ln_binomial_upper_all(m, p)[r as usize]
}

/// `ln P[Bin(m, p) >= r]` for every `r` in `0..=m` from one exact pass.
pub fn exact_ln_binomial_upper_all(m: u64, p: f64) -> Vec<f64> {
    let (a, k) = dyadic(p);
    let one_k = BigUint::one() << k;
    let b = &one_k - &a;
    // term_q = C(m,q) a^q b^(m-q); all share the denominator 2^(k m)
    let mut pow_b = vec![BigUint::one(); (m + 1) as usize];
    for i in 1..=m as usize {
        pow_b[i] = &pow_b[i - 1] * &b;
    }
    let total_shift = k * m;
    let total = BigUint::one() << total_shift;
    let mut out = vec![0.0; (m + 1) as usize];
    let mut sum = BigUint::zero();
    let mut c = BigUint::one();
    let mut pow_a = BigUint::one();
    for q in 0..m {
        sum += &c * &pow_a * &pow_b[(m - q) as usize];
        c = c * BigUint::from(m - q) / BigUint::from(q + 1);
        pow_a *= &a;
        out[(q + 1) as usize] = ln_one_minus(&sum, &total, total_shift);
    }
    out
}

/// `ln(1 - sum / 2^shift)`.
fn ln_one_minus(sum: &BigUint, total: &BigUint, shift: u64) -> f64 {
    if sum << 1u32 <= *total {
        // upper tail >= 1/2: ln(1 - Q) with Q = sum / 2^(k m)
        if sum.is_zero() {
            return 0.0;
        }
        let ln_q = ln_scaled(sum, shift);
        if ln_q < -40.0 {
            let q = ln_q.exp();
            -q - 0.5 * q * q
        } else {
            (-ln_q.exp()).ln_1p()
        }
    } else {
        ln_scaled(&(total - sum), shift)
    }
}

/// Naive 1-NN oracle: per query row, the smallest distance over all other
/// reference rows, by direct double loop.
pub fn naive_nn(q: &DataMatrix, r: &DataMatrix, exclude_self: bool) -> Vec<f64> {
    (0..q.n_rows())
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in 0..r.n_rows() {
                if exclude_self && i == j {
                    continue;
                }
                let mut s = 0.0;
                for c in 0..q.n_cols() {
                    let t = q.get(i, c) - r.get(j, c);
                    s += t * t;
                }
                let d = match q.dtype() {
                    privet::data::Dtype::Binary => s,
                    privet::data::Dtype::Float64 => s.sqrt(),
                };
                if d < best {
                    best = d;
                }
            }
            best
        })
        .collect()
}

/// Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Composite Simpson integral of `f` over `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}
