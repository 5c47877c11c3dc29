//! Deterministic, splittable random streams.
//!
//! Every stochastic operation in the crate draws from an [`RngStream`]: a
//! ChaCha12 stream cipher keyed by a SHA-256-derived key. Streams are
//! *splittable* — [`RngStream::split`] derives an independent child stream
//! from the parent key and an integer tag without disturbing the parent — so
//! seeds fan out deterministically across seeds, episodes, and player roles.
//!
//! The generator is named and versioned ([`RNG_ALGORITHM`]); all conversions
//! from raw output to floats and categorical draws are implemented here
//! explicitly so results stay stable across dependency upgrades.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

/// Identifier of the stream algorithm, recorded in run outputs.
pub const RNG_ALGORITHM: &str = "chacha12-sha256-split-v1";

/// A seedable, splittable random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    key: [u8; 32],
    chacha: ChaCha12Rng,
}

impl RngStream {
    /// Creates the root stream for a 64-bit seed.
    pub fn from_seed(seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"nashplay-root-v1");
        hasher.update(seed.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self { key, chacha: ChaCha12Rng::from_seed(key) }
    }

    /// Derives an independent child stream identified by `tag`.
    ///
    /// Children with distinct tags are independent of each other and of the
    /// parent's past and future output.
    pub fn split(&self, tag: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"nashplay-split-v1");
        hasher.update(self.key);
        hasher.update(tag.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self { key, chacha: ChaCha12Rng::from_seed(key) }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        self.chacha.next_u64()
    }

    /// Uniform double in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn uniform_usize(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_usize needs a nonempty range");
        // Multiply-shift on the unit double; the clamp guards the rounding
        // edge where u*n lands exactly on n.
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }

    /// Bernoulli draw with success probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Samples an index proportionally to the nonnegative weights.
    ///
    /// Weights need not be normalized; their sum must be positive and finite.
    /// Floating-point residue in the final bucket is absorbed by returning the
    /// last positive-weight index when the scan runs off the end.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        assert!(
            total > 0.0 && total.is_finite(),
            "categorical weights must have positive finite sum, got {total}"
        );
        let target = self.next_f64() * total;
        let mut acc = 0.0;
        let mut last_positive = None;
        for (i, &w) in weights.iter().enumerate() {
            debug_assert!(w >= 0.0, "negative categorical weight {w} at {i}");
            if w > 0.0 {
                acc += w;
                last_positive = Some(i);
                if target < acc {
                    return i;
                }
            }
        }
        last_positive.expect("at least one positive weight")
    }

    /// Standard exponential draw via inversion (used for Dirichlet rows).
    pub fn exp1(&mut self) -> f64 {
        // 1 - u lies in (0, 1], so the log is finite.
        -(1.0 - self.next_f64()).ln()
    }
}
