#![allow(dead_code)]

use brownresnick::rng::RngStream;
use brownresnick::variogram::{Point, SpectralAtom, Variogram};

pub const SEED: u64 = 20261015;

pub fn pts(xs: &[f64]) -> Vec<Point> {
    xs.iter().map(|x| vec![*x]).collect()
}

/// One instance of every built-in kind, keyed by a short label.
pub fn builtin_kinds() -> Vec<(&'static str, Variogram)> {
    let frac = |a: f64| Variogram::fractional(1, a, 1.0).unwrap();
    vec![
        ("zero", Variogram::zero(1).unwrap()),
        ("fractional_0.5", frac(0.5)),
        ("brownian", Variogram::brownian(1)),
        ("fractional_1.5", Variogram::fractional(1, 1.5, 0.7).unwrap()),
        ("fractional_2", frac(2.0)),
        ("anisotropic", Variogram::anisotropic(vec![1.0, 2.0], vec![0.5, 1.0]).unwrap()),
        (
            "spectral",
            Variogram::spectral(
                2,
                1.2,
                vec![
                    SpectralAtom { direction: vec![1.0, 0.0], mass: 0.6 },
                    SpectralAtom { direction: vec![1.0, 1.0], mass: 0.4 },
                ],
            )
            .unwrap(),
        ),
        ("sum", Variogram::sum(frac(1.0), frac(2.0)).unwrap()),
        ("product_domain", Variogram::product(frac(1.0), Variogram::fractional(1, 0.8, 2.0).unwrap())),
    ]
}

pub fn uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

pub fn random_point(rng: &mut RngStream, dim: usize, half_width: f64) -> Point {
    (0..dim).map(|_| uniform(rng, -half_width, half_width)).collect()
}

/// Simplex weights; with probability 1/4 one weight is set to zero.
pub fn random_weights(rng: &mut RngStream, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.exponential()).collect();
    if n > 1 && rng.uniform() < 0.25 {
        w[0] = 0.0;
    }
    let total: f64 = w.iter().sum();
    let mut w: Vec<f64> = w.iter().map(|x| x / total).collect();
    // Force the sum to 1 to the last bit.
    let rest: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - rest;
    w
}
