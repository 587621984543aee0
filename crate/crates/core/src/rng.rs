//! Seeded random streams.
//!
//! Every replicate of every experiment owns an [`RngStream`] identified by
//! `(seed, stream_id)`. The backing generator is ChaCha8, a counter-based
//! cipher with 2^64 independent streams per key, so replicate `r` depends
//! only on `(seed, r)` and never on scheduling.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

/// Deterministic uniform/normal/exponential source.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A stream on a different key with the same stream id. `lane`
    /// separates consumers within one replicate (e.g. Poisson points vs.
    /// Gaussian paths).
    pub fn derive(&self, lane: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(lane.wrapping_add(1))), self.stream_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion of the uniform.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        inverse_norm_cdf(self.uniform())
    }

    /// Unit-rate exponential.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -self.uniform().ln()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for z in out.iter_mut() {
            *z = self.normal();
        }
    }
}

/// Quantile function of the standard normal distribution.
#[inline]
pub fn inverse_norm_cdf(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
