mod common;

use brownresnick::rng::RngStream;
use brownresnick::stationarity::*;
use brownresnick::variogram::{Point, VarianceProfile};
use common::*;

fn random_config(rng: &mut RngStream, v: &brownresnick::variogram::Variogram) -> LaplaceConfig {
    let n = 1 + (rng.uniform() * 5.0) as usize;
    let sites: Vec<Point> = (0..n).map(|_| random_point(rng, v.dim(), 3.0)).collect();
    let weights = random_weights(rng, n);
    LaplaceConfig::new(v.clone(), VarianceProfile::ZeroAtOrigin, sites, weights).unwrap()
}

#[test]
fn laplace_is_shift_invariant_for_every_kind() {
    let mut rng = RngStream::new(SEED, 1);
    for (name, v) in builtin_kinds() {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let cfg = random_config(&mut rng, &v);
            let shifts: Vec<Point> = (0..10).map(|_| random_point(&mut rng, v.dim(), 5.0)).collect();
            let r = shift_invariance_check(&cfg, &shifts, 1e-10).unwrap();
            assert!(r.pass, "{name}: {r:?}");
            worst = worst.max(r.statistic);
        }
        assert!(worst <= 1e-10, "{name}: {worst}");
    }
}

#[test]
fn laplace_does_not_depend_on_variance_profile() {
    let mut rng = RngStream::new(SEED, 2);
    for (name, v) in builtin_kinds() {
        for _ in 0..100 {
            let cfg = random_config(&mut rng, &v);
            let shifted = LaplaceConfig {
                profile: VarianceProfile::Shifted { sigma0_sq: uniform(&mut rng, 0.0, 5.0) },
                ..cfg.clone()
            };
            let (a, b) = (gaussian_laplace(&cfg).unwrap(), gaussian_laplace(&shifted).unwrap());
            assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn lq_parts_reproduce_the_transform() {
    let mut rng = RngStream::new(SEED, 3);
    for (name, v) in builtin_kinds() {
        for _ in 0..100 {
            let cfg = random_config(&mut rng, &v);
            let p = lq_decomposition(&cfg);
            let direct = gaussian_laplace(&cfg).unwrap();
            let via_lq = (p.L + p.Q / 2.0).exp();
            assert!((direct - via_lq).abs() <= 1e-12 * direct.max(1.0), "{name}: {direct} vs {via_lq}");
        }
    }
}

#[test]
fn removing_the_drift_breaks_invariance() {
    let v = brownresnick::variogram::Variogram::brownian(1);
    let cfg = LaplaceConfig::new(v.clone(), VarianceProfile::ZeroAtOrigin, pts(&[0.0, 1.0]), vec![0.5, 0.5]).unwrap();
    let r = shift_invariance_check_with("undrifted", &cfg.sites, &cfg.weights, &[vec![1.0]], 1e-10, |s, u| {
        let c = LaplaceConfig::new(v.clone(), VarianceProfile::ZeroAtOrigin, s.to_vec(), u.to_vec())?;
        gaussian_laplace_with(&c, Drift::Removed)
    })
    .unwrap();
    assert!(!r.pass);
    assert!(r.statistic > 1e-3);
}

#[test]
fn compositions_stay_invariant() {
    let mut rng = RngStream::new(SEED, 4);
    let a = brownresnick::variogram::Variogram::fractional(1, 0.6, 1.0).unwrap();
    let b = brownresnick::variogram::Variogram::fractional(1, 1.7, 0.5).unwrap();
    for mode in [ComposeMode::Sum, ComposeMode::ProductDomain] {
        let v = compose(a.clone(), b.clone(), mode).unwrap();
        for _ in 0..100 {
            let cfg = random_config(&mut rng, &v);
            let shifts: Vec<Point> = (0..10).map(|_| random_point(&mut rng, v.dim(), 5.0)).collect();
            assert!(shift_invariance_check(&cfg, &shifts, 1e-10).unwrap().pass);
        }
    }
}

#[test]
fn two_site_example() {
    let cfg = LaplaceConfig::new(brownresnick::variogram::Variogram::brownian(1), VarianceProfile::ZeroAtOrigin, pts(&[0.0, 1.0]), vec![0.5, 0.5]).unwrap();
    assert!((gaussian_laplace(&cfg).unwrap() - 0.882_496_902_584_595).abs() < 1e-12);
}
