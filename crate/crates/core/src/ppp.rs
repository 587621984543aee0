//! Points of the Poisson process on R with intensity e^{-y} dy, emitted
//! lazily in decreasing order.

use crate::rng::RngStream;

/// Decreasing points U_1 > U_2 > ... with U_i = -log(Gamma_i), where Gamma_i
/// are the arrival times of a unit-rate Poisson process on (0, inf).
#[derive(Clone, Debug)]
pub struct ExtremalPointStream {
    rng: RngStream,
    gamma_sum: f64,
    count: u64,
}

impl ExtremalPointStream {
    pub fn new(rng: RngStream) -> Self {
        Self {
            rng,
            gamma_sum: 0.0,
            count: 0,
        }
    }

    pub fn next_point(&mut self) -> f64 {
        self.gamma_sum += self.rng.exponential();
        self.count += 1;
        -self.gamma_sum.ln()
    }

    /// Points emitted so far.
    pub fn emitted(&self) -> u64 {
        self.count
    }

    pub fn gamma_sum(&self) -> f64 {
        self.gamma_sum
    }
}

impl Iterator for ExtremalPointStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_point())
    }
}

/// Gumbel to unit Frechet: y -> e^y.
pub fn to_frechet(u: f64) -> f64 {
    u.exp()
}

/// Standard Gumbel CDF exp(-e^{-y}).
pub fn gumbel_cdf(y: f64) -> f64 {
    (-(-y).exp()).exp()
}

/// Unit Frechet CDF exp(-1/z) on (0, inf).
pub fn frechet_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        (-1.0 / z).exp()
    }
}
