//! Per-run random streams.
//!
//! Every run owns one [`RngStream`]: a ChaCha8 generator keyed by the base
//! seed (expanded with `SeedableRng::seed_from_u64`) with the ChaCha stream
//! id set to the run index. Distinct run indices therefore read disjoint
//! keystreams of the same key, and a run's draws never depend on how many
//! other runs exist or in which order they execute.
//!
//! Draw methods used everywhere in the crate:
//! - uniform on `[0, 1)`: 53 random mantissa bits (`rand`'s `StandardUniform`);
//! - integers below `n`: `rand`'s unbiased range sampling;
//! - standard normal: ziggurat (`rand_distr::StandardNormal`).

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(base_seed: u64, run_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(base_seed);
        inner.set_stream(run_index);
        Self { inner }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn coin(&mut self) -> bool {
        self.uniform() < 0.5
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
