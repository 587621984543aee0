mod common;

use brownresnick::analytics::ks_test;
use brownresnick::exec::map_replicates;
use brownresnick::ppp::*;
use brownresnick::rng::RngStream;
use common::SEED;

const STREAMS: usize = 100_000;

fn first_points(k: usize) -> Vec<Vec<f64>> {
    map_replicates(STREAMS, |r| ExtremalPointStream::new(RngStream::new(SEED, r)).take(k).collect())
}

#[test]
fn largest_point_is_gumbel_and_frechet() {
    let firsts: Vec<f64> = first_points(1).into_iter().map(|p| p[0]).collect();
    let r = ks_test("first_point", &firsts, gumbel_cdf, 0.01).unwrap();
    assert!(r.pass, "{r:?}");
    let fr: Vec<f64> = firsts.iter().map(|u| to_frechet(*u)).collect();
    let r = ks_test("first_point_frechet", &fr, frechet_cdf, 0.01).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn second_point_law() {
    // P[U_2 <= y] = P[at most one point above y] = G(y)(1 + e^{-y}).
    let seconds: Vec<f64> = first_points(2).into_iter().map(|p| p[1]).collect();
    let r = ks_test("second_point", &seconds, |y| gumbel_cdf(y) * (1.0 + (-y).exp()), 0.01).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn exceedance_counts_are_poisson() {
    for y in [-1.0f64, 0.0, 1.0] {
        let counts: Vec<f64> = map_replicates(STREAMS, |r| {
            ExtremalPointStream::new(RngStream::new(SEED ^ 7, r)).take_while(|u| *u > y).count() as f64
        });
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let ratio = var / mean;
        assert!((0.95..=1.05).contains(&ratio), "y={y}: ratio {ratio}");
        let expected = (-y).exp();
        assert!((mean - expected).abs() < 4.0 * (expected / n).sqrt(), "y={y}: mean {mean}");
    }
}

#[test]
fn streams_strictly_decrease() {
    for r in 0..100 {
        let pts: Vec<f64> = ExtremalPointStream::new(RngStream::new(SEED, r)).take(5000).collect();
        assert!(pts.windows(2).all(|w| w[1] < w[0]));
    }
}
