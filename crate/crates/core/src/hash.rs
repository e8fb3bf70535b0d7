//! Seeded pairwise-independent hash and sign functions.
//!
//! Both maps are degree-1 polynomials over the Mersenne field `2^61 - 1`
//! (Carter–Wegman). Coefficients are drawn from a ChaCha stream keyed by the
//! seed, so a seed yields the same functions on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MERSENNE_61: u64 = (1 << 61) - 1;

#[inline]
fn mod_mersenne(x: u128) -> u64 {
    // x < 2^122 for our operands; two folds bring it below 2^61 + small.
    let lo = (x as u64) & MERSENNE_61;
    let hi = (x >> 61) as u64;
    let mut r = lo + (hi & MERSENNE_61) + ((hi >> 61) as u64);
    while r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

/// One affine map `x -> (a x + c) mod (2^61 - 1)` with `a != 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Affine61 {
    a: u64,
    c: u64,
}

impl Affine61 {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Affine61 {
            a: rng.random_range(1..MERSENNE_61),
            c: rng.random_range(0..MERSENNE_61),
        }
    }

    #[inline]
    fn eval(&self, x: u64) -> u64 {
        mod_mersenne(self.a as u128 * x as u128 + self.c as u128)
    }
}

/// A bucket hash `h: [p] -> [b]` paired with a sign hash `s: [p] -> {-1, +1}`.
///
/// Both are tabulated for the `p` coordinates at construction so that the
/// sketching inner loops are plain array lookups.
#[derive(Clone, Debug, PartialEq)]
pub struct HashPair {
    seed: u64,
    buckets: usize,
    bucket_of: Vec<u32>,
    sign_of: Vec<f64>,
}

impl HashPair {
    /// Draws the hash pair for `dim` coordinates into `buckets` buckets.
    ///
    /// `buckets` must be a power of two.
    pub fn new(seed: u64, dim: usize, buckets: usize) -> Result<Self> {
        if buckets == 0 || !buckets.is_power_of_two() {
            return Err(Error::config(format!(
                "bucket count must be a positive power of two, got {buckets}"
            )));
        }
        if buckets > u32::MAX as usize {
            return Err(Error::config("bucket count too large"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = Affine61::draw(&mut rng);
        let s = Affine61::draw(&mut rng);
        let mask = (buckets - 1) as u64;
        let bucket_of = (0..dim as u64).map(|x| (h.eval(x) & mask) as u32).collect();
        let sign_of = (0..dim as u64)
            .map(|x| if s.eval(x) & 1 == 0 { 1.0 } else { -1.0 })
            .collect();
        Ok(HashPair {
            seed,
            buckets,
            bucket_of,
            sign_of,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn dim(&self) -> usize {
        self.bucket_of.len()
    }

    #[inline]
    pub fn bucket(&self, i: usize) -> usize {
        self.bucket_of[i] as usize
    }

    #[inline]
    pub fn sign(&self, i: usize) -> f64 {
        self.sign_of[i]
    }
}

/// Mixes a base seed with a stream tag and an index (SplitMix64 finalizer).
///
/// Used to derive independent seeds for repetitions, factors and runs.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base
        ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
