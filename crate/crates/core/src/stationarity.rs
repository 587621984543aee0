//! Laplace-transform form of the shift-invariance criterion for Gaussian
//! xi = W - sigma^2/2, and the sum / product-domain compositions.

use crate::analytics::TestReport;
use crate::error::{invalid, Error, Result};
use crate::variogram::{check_points, covariance_matrix, Gamma, Point, VarianceProfile, Variogram};
use serde::{Deserialize, Serialize};

/// Sites and simplex weights at which the Laplace transform is evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceConfig {
    pub variogram: Variogram,
    pub profile: VarianceProfile,
    pub sites: Vec<Point>,
    pub weights: Vec<f64>,
}

impl LaplaceConfig {
    pub fn new(variogram: Variogram, profile: VarianceProfile, sites: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if sites.is_empty() {
            return invalid("`sites` must be non-empty");
        }
        if sites.len() != weights.len() {
            return invalid(format!("{} sites but {} weights", sites.len(), weights.len()));
        }
        check_points(variogram.dim(), &sites)?;
        profile.validate()?;
        if weights.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return invalid("weights must lie in [0, 1]");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("weights must sum to 1, got {total}"));
        }
        Ok(Self {
            variogram,
            profile,
            sites,
            weights,
        })
    }

    pub fn shifted(&self, h: &[f64]) -> Result<Self> {
        if h.len() != self.variogram.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.variogram.dim(),
                got: h.len(),
            });
        }
        Ok(Self {
            sites: shift_sites(&self.sites, h),
            ..self.clone()
        })
    }
}

fn shift_sites(sites: &[Point], h: &[f64]) -> Vec<Point> {
    sites.iter().map(|p| p.iter().zip(h).map(|(a, b)| a + b).collect()).collect()
}

/// Whether the drift -sigma^2/2 is applied to the Gaussian vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Drift {
    Standard,
    /// Means forced to zero; used as a negative control.
    Removed,
}

fn laplace_exponent<G: Gamma + ?Sized>(gamma: &G, profile: &VarianceProfile, sites: &[Point], u: &[f64], drift: Drift) -> Result<f64> {
    let (cov, mean) = covariance_matrix(gamma, profile, sites)?;
    let n = sites.len();
    let linear: f64 = match drift {
        Drift::Standard => (0..n).map(|i| mean[i] * u[i]).sum(),
        Drift::Removed => 0.0,
    };
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += cov[(i, j)] * u[i] * u[j];
        }
    }
    Ok(linear + 0.5 * quad)
}

/// phi(u) = exp(sum mu_i u_i + 1/2 sum sigma_ij u_i u_j) with mu_i = -sigma^2(t_i)/2.
pub fn gaussian_laplace(cfg: &LaplaceConfig) -> Result<f64> {
    gaussian_laplace_with(cfg, Drift::Standard)
}

pub fn gaussian_laplace_with(cfg: &LaplaceConfig, drift: Drift) -> Result<f64> {
    Ok(laplace_exponent(&cfg.variogram, &cfg.profile, &cfg.sites, &cfg.weights, drift)?.exp())
}

/// Linear and quadratic parts after eliminating u_1 = 1 - sum_{i>=2} u_i.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct LqParts {
    pub L: f64,
    pub Q: f64,
}

/// L = -1/2 sum_{i>=2} gamma(t_i - t_1) u_i,
/// Q = 1/2 sum_{i,j>=2} (gamma(t_i - t_1) + gamma(t_j - t_1) - gamma(t_j - t_i)) u_i u_j.
pub fn lq_decomposition(cfg: &LaplaceConfig) -> LqParts {
    let g = &cfg.variogram;
    let t = &cfg.sites;
    let u = &cfg.weights;
    let n = t.len();
    let to_first: Vec<f64> = (0..n).map(|i| g.gamma_diff(&t[i], &t[0])).collect();
    let l = -0.5 * (1..n).map(|i| to_first[i] * u[i]).sum::<f64>();
    let mut q = 0.0;
    for i in 1..n {
        for j in 1..n {
            q += (to_first[i] + to_first[j] - g.gamma_diff(&t[j], &t[i])) * u[i] * u[j];
        }
    }
    LqParts { L: l, Q: 0.5 * q }
}

/// Relative change |phi(t + h) - phi(t)| / phi(t) of a Laplace evaluator
/// under each shift; passes when all are within `tol`.
pub fn shift_invariance_check_with(
    name: &str,
    sites: &[Point],
    weights: &[f64],
    shifts: &[Point],
    tol: f64,
    laplace: impl Fn(&[Point], &[f64]) -> Result<f64>,
) -> Result<TestReport> {
    let base = laplace(sites, weights)?;
    let mut worst: f64 = 0.0;
    for h in shifts {
        let moved = laplace(&shift_sites(sites, h), weights)?;
        worst = worst.max((moved - base).abs() / base);
    }
    Ok(TestReport {
        name: name.to_string(),
        statistic: worst,
        p_value: None,
        n: shifts.len(),
        pass: worst <= tol,
        tolerance: tol,
    })
}

pub fn shift_invariance_check(cfg: &LaplaceConfig, shifts: &[Point], tol: f64) -> Result<TestReport> {
    for h in shifts {
        if h.len() != cfg.variogram.dim() {
            return Err(Error::DimensionMismatch {
                expected: cfg.variogram.dim(),
                got: h.len(),
            });
        }
    }
    shift_invariance_check_with("laplace_shift_invariance", &cfg.sites, &cfg.weights, shifts, tol, |s, u| {
        Ok(laplace_exponent(&cfg.variogram, &cfg.profile, s, u, Drift::Standard)?.exp())
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeMode {
    /// gamma_1 + gamma_2 on a common domain.
    Sum,
    /// gamma(t_1, t_2) = gamma_1(t_1) + gamma_2(t_2).
    ProductDomain,
}

pub fn compose(first: Variogram, second: Variogram, mode: ComposeMode) -> Result<Variogram> {
    match mode {
        ComposeMode::Sum => Variogram::sum(first, second),
        ComposeMode::ProductDomain => Ok(Variogram::product(first, second)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pts(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|x| vec![*x]).collect()
    }

    fn two_site(profile: VarianceProfile) -> LaplaceConfig {
        LaplaceConfig::new(Variogram::brownian(1), profile, pts(&[0.0, 1.0]), vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn single_site_is_one() {
        let cfg = LaplaceConfig::new(Variogram::brownian(1), VarianceProfile::ZeroAtOrigin, pts(&[2.7]), vec![1.0]).unwrap();
        assert_relative_eq!(gaussian_laplace(&cfg).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_sites_half_weights() {
        let cfg = two_site(VarianceProfile::ZeroAtOrigin);
        assert_relative_eq!(gaussian_laplace(&cfg).unwrap(), (-0.125f64).exp(), epsilon = 1e-15);
        let shifted = two_site(VarianceProfile::Shifted { sigma0_sq: 3.0 });
        assert!((gaussian_laplace(&shifted).unwrap() - (-0.125f64).exp()).abs() <= 1e-12);
    }

    #[test]
    fn lq_parts() {
        let parts = lq_decomposition(&two_site(VarianceProfile::ZeroAtOrigin));
        assert_relative_eq!(parts.L, -0.25);
        assert_relative_eq!(parts.Q, 0.25);

        let same = LaplaceConfig::new(Variogram::brownian(1), VarianceProfile::ZeroAtOrigin, pts(&[1.0, 1.0, 1.0]), vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(lq_decomposition(&same), LqParts { L: 0.0, Q: 0.0 });

        let corner = LaplaceConfig::new(Variogram::brownian(1), VarianceProfile::ZeroAtOrigin, pts(&[0.0, 1.0, 4.0]), vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(lq_decomposition(&corner), LqParts { L: 0.0, Q: 0.0 });
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(LaplaceConfig::new(Variogram::brownian(1), VarianceProfile::ZeroAtOrigin, pts(&[0.0, 1.0]), vec![0.5, 0.6]).is_err());
        assert!(LaplaceConfig::new(Variogram::brownian(1), VarianceProfile::ZeroAtOrigin, pts(&[0.0, 1.0]), vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn zero_shift_has_zero_violation() {
        let r = shift_invariance_check(&two_site(VarianceProfile::ZeroAtOrigin), &[vec![0.0]], 1e-10).unwrap();
        assert!(r.pass);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn drift_removed_breaks_invariance() {
        let cfg = two_site(VarianceProfile::ZeroAtOrigin);
        let r = shift_invariance_check_with("undrifted", &cfg.sites, &cfg.weights, &[vec![1.0]], 1e-10, |s, u| {
            Ok(laplace_exponent(&cfg.variogram, &cfg.profile, s, u, Drift::Removed)?.exp())
        })
        .unwrap();
        assert!(!r.pass);
        // exp(1/2 * (5/4 - 1/4)) - 1
        assert_relative_eq!(r.statistic, 0.5f64.exp() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn compositions() {
        let s = compose(Variogram::brownian(1), Variogram::fractional(1, 2.0, 1.0).unwrap(), ComposeMode::Sum).unwrap();
        assert_eq!(s.eval(&[1.0]).unwrap(), 2.0);
        let p = compose(Variogram::brownian(1), Variogram::brownian(1), ComposeMode::ProductDomain).unwrap();
        assert_eq!(p.eval(&[1.0, 1.0]).unwrap(), 2.0);
        let rainfall = Variogram::anisotropic(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(p.eval(&[0.3, -2.0]).unwrap(), rainfall.eval(&[0.3, -2.0]).unwrap());
        assert_eq!(p.eval(&[0.0, 1.7]).unwrap(), 1.7);
        assert!(compose(Variogram::brownian(1), Variogram::brownian(2), ComposeMode::Sum).is_err());
    }
}
