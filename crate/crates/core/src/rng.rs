//! Counter-based deterministic random numbers.
//!
//! Every draw is a pure function of `(seed, stream, counter)`, so results do
//! not depend on evaluation order or thread scheduling. The construction is
//! three chained SplitMix64 finalizers:
//!
//! ```text
//! block(seed, stream, counter) = mix(mix(mix(seed) ^ stream) ^ counter)
//! unit(seed, stream, counter)  = (block >> 11) * 2^-53          in [0, 1)
//! ```
//!
//! The recipe is small enough to port bit-exactly to other languages.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `x + golden gamma`.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed, stateless generator. `stream` separates independent uses of the
/// same seed (e.g. one stream per sample index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { key: splitmix64(splitmix64(seed) ^ stream) }
    }

    #[inline]
    pub fn block(&self, counter: u64) -> u64 {
        splitmix64(self.key ^ counter)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn unit(&self, counter: u64) -> f64 {
        (self.block(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi]`; `hi` itself is approached but not produced.
    #[inline]
    pub fn uniform(&self, counter: u64, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit(counter)
    }

    /// Integer in `[0, n)` by 128-bit multiply-shift. Bias is below `n / 2^64`.
    #[inline]
    pub fn below(&self, counter: u64, n: u64) -> u64 {
        ((self.block(counter) as u128 * n as u128) >> 64) as u64
    }

    /// Fisher–Yates shuffle consuming counters `0..len-1`.
    pub fn shuffle<T>(&self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64, i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
