//! Deterministic named random streams.
//!
//! Every stochastic component (weight init, noise, latent draws, shuffling,
//! jitter) pulls from a [`RngStream`] owned by a master seed plus a string
//! name. Streams with different names are statistically independent and do
//! not interact, so adding a new consumer of randomness never perturbs the
//! values an existing consumer sees. That property is what makes seeded runs
//! byte-for-byte reproducible across refactors.

use rand::distributions::uniform::{SampleRange, SampleUniform};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// FNV-1a 64-bit hash; maps a stream name to a ChaCha stream id.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A named, counter-based random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Stream identified by `(seed, name)`.
    pub fn new(seed: u64, name: &str) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a(name.as_bytes()));
        Self { rng }
    }

    /// Derives a child seed for an isolated sub-task (e.g. one dataset
    /// sample), so the sub-task can be regenerated alone.
    pub fn derive_seed(seed: u64, name: &str) -> u64 {
        RngStream::new(seed, name).rng.next_u64()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw from `range`.
    pub fn uniform<T, R>(&mut self, range: R) -> T
    where
        T: SampleUniform,
        R: SampleRange<T>,
    {
        self.rng.gen_range(range)
    }

    /// Standard normal.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Vector of iid normals with the given std around 0.
    pub fn normal_vec(&mut self, n: usize, std: f64) -> Vec<f64> {
        (0..n).map(|_| self.normal() * std).collect()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_name_same_sequence() {
        let mut a = RngStream::new(7, "init");
        let mut b = RngStream::new(7, "init");
        for _ in 0..32 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_names_decorrelated() {
        let mut a = RngStream::new(7, "init");
        let mut b = RngStream::new(7, "noise");
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0, "distinct streams should not collide");
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = RngStream::new(1, "init");
        let mut b = RngStream::new(2, "init");
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn derive_seed_stable() {
        assert_eq!(
            RngStream::derive_seed(42, "sample.0"),
            RngStream::derive_seed(42, "sample.0")
        );
        assert_ne!(
            RngStream::derive_seed(42, "sample.0"),
            RngStream::derive_seed(42, "sample.1")
        );
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut s = RngStream::new(3, "shuffle");
        let mut xs: Vec<u32> = (0..100).collect();
        s.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(xs, (0..100).collect::<Vec<_>>(), "shuffle left input in order");
    }
}
