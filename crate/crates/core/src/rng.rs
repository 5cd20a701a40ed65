//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by the run seed. Independent
//! purposes (velocity initialisation, vapour placement, Monte Carlo moves, ...)
//! select disjoint ChaCha stream ids:
//!
//! ```text
//! stream_id = (purpose as u64) << 48 | index
//! ```
//!
//! where `index` distinguishes e.g. workers. Streams are never shared between
//! consumers, so results do not depend on scheduling or worker count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum Purpose {
    Velocities = 1,
    Lattice = 2,
    Vapor = 3,
    MonteCarlo = 4,
    Testing = 0x7fff,
}

#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn substream(seed: u64, purpose: Purpose, index: u64) -> Self {
        debug_assert!(index < 1 << 48);
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(((purpose as u64) << 48) | (index & ((1 << 48) - 1)));
        Rng { inner }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // Lemire's multiply-shift; bias is below 2^-32 for the sizes used here
        ((self.inner.next_u64() >> 32) * n as u64 >> 32) as usize
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}
