//! Counter-based random stream used for resample plans.
//!
//! Word `i` of the stream for key `seed` is the SplitMix64 finalizer applied
//! to `seed + (i + 1) * 0x9E3779B97F4A7C15` (wrapping). The output depends only
//! on `(seed, i)`, so any position can be computed without replaying the
//! stream, and the result is identical on every platform.

use rand_core::{impls, RngCore};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Identifier recorded in plan dumps and results.
pub const ALGORITHM: &str = "splitmix64-ctr/lemire";

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless block function: the 64-bit word at `counter` for `seed`.
#[inline]
pub fn word_at(seed: u64, counter: u64) -> u64 {
    mix64(seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GAMMA)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn at(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of words consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        let w = word_at(self.seed, self.counter);
        self.counter = self.counter.wrapping_add(1);
        w
    }

    /// Unbiased draw from `[0, bound)` by multiply-shift with rejection.
    ///
    /// `bound` must be non-zero.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let mut m = u128::from(self.next_word()) * u128::from(bound);
        let mut low = m as u64;
        if low < bound {
            let threshold = bound.wrapping_neg() % bound;
            while low < threshold {
                m = u128::from(self.next_word()) * u128::from(bound);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_word() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_splitmix64() {
        // First output of the canonical splitmix64.c with state 0.
        assert_eq!(word_at(0, 0), 0xE220_A839_7B1D_CDAF);
        let mut rng = CounterRng::new(42);
        assert_eq!(rng.next_word(), 0xBDD7_3226_2FEB_6E95);
        assert_eq!(rng.next_word(), 0x28EF_E333_B266_F103);
        assert_eq!(rng.next_word(), 0x4752_6757_130F_9F52);
    }

    #[test]
    fn random_access_agrees_with_sequential() {
        let mut seq = CounterRng::new(9);
        for i in 0..100 {
            assert_eq!(seq.next_word(), CounterRng::at(9, i).next_word());
        }
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = CounterRng::new(3);
        for bound in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..200 {
                assert!(rng.below(bound) < bound);
            }
        }
        assert_eq!(rng.below(1), 0);
    }
}
