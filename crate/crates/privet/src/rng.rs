//! Seeded randomness.
//!
//! Every random draw in the crate comes from a xoshiro256** generator whose
//! 256-bit state is filled by splitmix64 from a 64-bit seed. A run has one
//! master seed; independent consumers (splitting, leak injection, bootstrap
//! replicates, ...) get their own stream by mixing a stream name, and
//! optionally an index, into that seed. The recipe is small enough to port:
//!
//! ```text
//! stream_seed = splitmix64(master ^ fnv1a64(name)) ^ splitmix64(index + 1)
//! state       = xoshiro256**::seed_from_u64(stream_seed)   // splitmix64 fill
//! below(n)    = (next_u64() as u128 * n as u128) >> 64
//! unit()      = (next_u64() >> 11) * 2^-53
//! shuffle(v)  = for i in (1..len).rev(): swap(v[i], v[below(i + 1)])
//! ```

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub type Rng = Xoshiro256StarStar;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Generator for the named stream `name` under `master`.
pub fn stream(master: u64, name: &str) -> Rng {
    indexed_stream(master, name, 0)
}

/// Generator for replicate `index` of the named stream.
pub fn indexed_stream(master: u64, name: &str, index: u64) -> Rng {
    let seed = splitmix64(master ^ fnv1a64(name)) ^ splitmix64(index.wrapping_add(1));
    Rng::seed_from_u64(seed)
}

/// Uniform integer in `0..n` by multiply-shift. `n` must be positive.
#[inline]
pub fn below(rng: &mut Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Uniform double in `[0, 1)` with 53 random bits.
#[inline]
pub fn unit(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform double in the open interval `(0, 1)`.
#[inline]
pub fn open_unit(rng: &mut Rng) -> f64 {
    loop {
        let u = unit(rng);
        if u > 0.0 {
            return u;
        }
    }
}

/// Fisher-Yates shuffle, descending index form.
pub fn shuffle<T>(rng: &mut Rng, v: &mut [T]) {
    for i in (1..v.len()).rev() {
        let j = below(rng, i + 1);
        v.swap(i, j);
    }
}

/// `k` distinct indices from `0..n`, in the order drawn.
pub fn sample_indices(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(rng, n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, "split").next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s1 = stream(7, "split");
        let mut s2 = stream(7, "inject");
        assert_ne!(s1.next_u64(), s2.next_u64());
        let mut r0 = indexed_stream(7, "bootstrap", 0);
        let mut r1 = indexed_stream(7, "bootstrap", 1);
        assert_ne!(r0.next_u64(), r1.next_u64());
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = stream(1, "t");
        let mut v: Vec<usize> = (0..100).collect();
        shuffle(&mut rng, &mut v);
        let mut s = v.clone();
        s.sort_unstable();
        assert_eq!(s, (0..100).collect::<Vec<_>>());
        assert_ne!(v, s);
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = stream(3, "t");
        for n in 1..50 {
            for _ in 0..20 {
                assert!(below(&mut rng, n) < n);
            }
        }
    }

    #[test]
    fn sample_indices_distinct() {
        let mut rng = stream(5, "t");
        let mut s = sample_indices(&mut rng, 40, 15);
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 15);
    }
}
