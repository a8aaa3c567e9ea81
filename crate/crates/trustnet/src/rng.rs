//! Deterministic randomness.
//!
//! Every random draw in the pipeline comes from a ChaCha8 stream keyed by the
//! run seed plus context tags (purpose, node, epoch, set). Streams are
//! independent of call order, so results are bit-identical no matter how work
//! is scheduled, and resuming a computation does not shift later draws.
//!
//! Integer and unit-interval sampling are implemented here directly on
//! `next_u64` instead of going through distribution helpers, which keeps the
//! byte streams stable across dependency upgrades.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Domain tags keeping unrelated consumers on disjoint streams.
pub mod tag {
    pub const SPLIT: u64 = 0x5350_4c49;
    pub const INIT: u64 = 0x494e_4954;
    pub const SAMPLE: u64 = 0x534d_504c;
}

/// SplitMix64 finalizer; bijective on u64.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds context tags into a base seed, one mix round per tag.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = mix64(base ^ 0x7472_7573_746e_6574); // "trustnet"
    for &t in tags {
        s = mix64(s ^ t);
    }
    s
}

/// A ChaCha8 stream for the given (base seed, tags) context.
pub fn stream(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Uniform integer in `[0, n)` by widening multiplication (unbiased).
#[inline]
pub fn uniform_below(rng: &mut impl RngCore, n: u64) -> u64 {
    debug_assert!(n > 0);
    let threshold = n.wrapping_neg() % n;
    loop {
        let x = rng.next_u64();
        let wide = (x as u128) * (n as u128);
        if (wide as u64) >= threshold {
            return (wide >> 64) as u64;
        }
    }
}

/// Uniform `f64` in `[0, 1)` with 53 random bits.
#[inline]
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Uniform `f64` in `[-a, a]`.
#[inline]
pub fn symmetric_f64(rng: &mut impl RngCore, a: f64) -> f64 {
    a * (2.0 * unit_f64(rng) - 1.0)
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_below(rng, (i + 1) as u64) as usize;
        items.swap(i, j);
    }
}

/// Draws `take` distinct indices from `[0, total)`, returned sorted.
///
/// Small requests against large ranges use rejection (collisions are rare and
/// checked linearly); requests covering a big fraction of the range fall back
/// to a partial shuffle.
pub fn sample_indices(rng: &mut impl RngCore, total: u64, take: usize) -> Vec<u64> {
    let take = take.min(total as usize);
    if take == 0 {
        return Vec::new();
    }
    let mut picked: Vec<u64>;
    if (take as u64) * 4 >= total {
        let mut all: Vec<u64> = (0..total).collect();
        for i in 0..take {
            let j = i as u64 + uniform_below(rng, total - i as u64);
            all.swap(i, j as usize);
        }
        picked = all[..take].to_vec();
    } else {
        picked = Vec::with_capacity(take);
        while picked.len() < take {
            let c = uniform_below(rng, total);
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
    }
    picked.sort_unstable();
    picked
}
