//! Seeded, stream-addressable random numbers.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// A ChaCha12 stream identified by `(seed, stream)`.
///
/// ChaCha is counter based, so the same pair yields the same sequence on every
/// platform, and distinct stream ids give independent sequences that can be
/// driven from different threads without sharing state.
#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha12Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh source on the same seed with a derived stream id.
    ///
    /// Used to hand each replication (or each shell of a parallel estimator)
    /// its own deterministic substream.
    pub fn substream(&self, index: u64) -> RandomSource {
        let mixed = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17)
            ^ index.wrapping_add(0xD1B5_4A32_D192_ED03);
        RandomSource::new(self.seed, mixed)
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.normal()).collect()
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// One draw from any `rand_distr` real distribution.
    #[inline]
    pub fn sample<D: Distribution<f64>>(&mut self, dist: &D) -> f64 {
        dist.sample(&mut self.rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Runs `count` replications in parallel, replication `r` on stream `r` of `seed`.
///
/// Output order follows the replication index, so results are identical for
/// any thread count.
pub fn replicate<T, F>(count: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, RandomSource) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|r| f(r, RandomSource::new(seed, r as u64)))
        .collect()
}
