//! Seeded deterministic random number generator.
//!
//! The generator is xoshiro256++ with its state filled from SplitMix64, both
//! frozen here so that identical seeds give identical sequences on every
//! platform and in any reimplementation. `f64` samples take the top 53 bits
//! of one output word, giving values in `[0, 1)`.

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    state: [u64; 4],
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        SeededRng { seed, state }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`. Callers must ensure `lo < hi`; see
    /// [`SeededRng::uniform_vec`] for the checked entry point.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo < hi);
        let v = lo + self.next_f64() * (hi - lo);
        // Floating-point rounding can land exactly on `hi`; keep the
        // half-open contract.
        if v >= hi {
            hi.next_down().max(lo)
        } else {
            v
        }
    }

    /// `n` uniform samples in `[lo, hi)`.
    pub fn uniform_vec(&mut self, n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if !(lo < hi) {
            return Err(Error::domain(format!(
                "uniform range requires lo < hi, got [{lo}, {hi})"
            )));
        }
        Ok((0..n).map(|_| self.uniform(lo, hi)).collect())
    }

    /// Unbiased integer in `[0, bound)` by rejection sampling.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % bound;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Derive an independent generator from this generator's seed and an
    /// index. Substreams are stable: they depend only on `(seed, index)`,
    /// never on how much of the parent stream has been consumed.
    pub fn substream(&self, index: u64) -> SeededRng {
        let mut sm = self.seed;
        let decorrelated = splitmix64(&mut sm);
        let mut sm2 = decorrelated ^ index.wrapping_mul(GOLDEN);
        SeededRng::new(splitmix64(&mut sm2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_answer_seed_42() {
        // Frozen reference sequence for the exact generator defined above.
        let mut rng = SeededRng::new(42);
        let expected: [u64; 5] = [
            0xd0764d4f4476689f,
            0x519e4174576f3791,
            0xfbe07cfb0c24ed8c,
            0xb37d9f600cd835b8,
            0xcb231c3874846a73,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
        let mut rng = SeededRng::new(42);
        assert_eq!(rng.next_f64(), 0.8143051451229099);
        assert_eq!(rng.next_f64(), 0.3188210400616611);
    }

    #[test]
    fn identical_seeds_identical_sequences() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        let va = a.uniform_vec(3, -1.0, 1.0).unwrap();
        let vb = b.uniform_vec(3, -1.0, 1.0).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(43);
        let va = a.uniform_vec(100, 0.0, 1.0).unwrap();
        let vb = b.uniform_vec(100, 0.0, 1.0).unwrap();
        assert!(va.iter().zip(&vb).any(|(x, y)| x != y));
    }

    #[test]
    fn uniform_range_containment() {
        let mut rng = SeededRng::new(1);
        let v = rng.uniform_vec(10_000, -0.1, 0.1).unwrap();
        assert!(v.iter().all(|&x| (-0.1..0.1).contains(&x)));
    }

    #[test]
    fn degenerate_range_rejected() {
        let mut rng = SeededRng::new(1);
        assert!(rng.uniform_vec(3, 0.5, 0.5).is_err());
        assert!(rng.uniform_vec(3, 1.0, -1.0).is_err());
    }

    #[test]
    fn substreams_are_stable_and_distinct() {
        let rng = SeededRng::new(9);
        let mut s0a = rng.substream(0);
        let mut s0b = rng.substream(0);
        let mut s1 = rng.substream(1);
        assert_eq!(s0a.next_u64(), s0b.next_u64());
        let mut s0c = rng.substream(0);
        assert_ne!(s0c.next_u64(), s1.next_u64());
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = SeededRng::new(3);
        let mut v: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
