//! Closed-form oracles and the statistical tests used to compare them with
//! simulation output.

use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Above this gamma both normal CDF terms of the bivariate law equal 1 to
/// machine precision and the independence product is returned.
pub const HR_INDEPENDENCE_GUARD: f64 = 5000.0;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Two-point law of the Brown-Resnick field, parametrized by
/// gamma(t1 - t2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BivariateLaw {
    gamma_val: f64,
}

impl BivariateLaw {
    pub fn new(gamma_val: f64) -> Result<Self> {
        if !(gamma_val >= 0.0) {
            return invalid(format!("`gamma_val` must be >= 0, got {gamma_val}"));
        }
        Ok(Self { gamma_val })
    }

    pub fn gamma_val(&self) -> f64 {
        self.gamma_val
    }

    pub fn cdf(&self, y1: f64, y2: f64) -> f64 {
        let g = self.gamma_val;
        if y1 == f64::NEG_INFINITY || y2 == f64::NEG_INFINITY {
            return 0.0;
        }
        if g == 0.0 {
            return (-(-y1.min(y2)).exp()).exp();
        }
        let (e1, e2) = ((-y1).exp(), (-y2).exp());
        if g > HR_INDEPENDENCE_GUARD {
            return (-e1 - e2).exp();
        }
        let a = g.sqrt();
        let term = |e: f64, own: f64, other: f64| {
            if e == 0.0 {
                0.0
            } else {
                e * norm_cdf(a / 2.0 + (other - own) / a)
            }
        };
        (-term(e1, y1, y2) - term(e2, y2, y1)).exp()
    }
}

/// P[eta(t1) <= y1, eta(t2) <= y2] for gamma(t1 - t2) = `gamma_val`.
pub fn hr_bivariate_cdf(gamma_val: f64, y1: f64, y2: f64) -> Result<f64> {
    Ok(BivariateLaw::new(gamma_val)?.cdf(y1, y2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DependenceMeasures {
    pub rho: f64,
    /// Extremal coefficient: P[eta(0) <= z, eta(t) <= z] = P[eta(0) <= z]^sigma_coef.
    pub sigma_coef: f64,
}

pub fn dependence_measures(gamma_val: f64) -> Result<DependenceMeasures> {
    if !(gamma_val >= 0.0) {
        return invalid(format!("`gamma_val` must be >= 0, got {gamma_val}"));
    }
    let sigma_coef = 2.0 * norm_cdf(gamma_val.sqrt() / 2.0);
    Ok(DependenceMeasures {
        rho: 2.0 - sigma_coef,
        sigma_coef,
    })
}

/// Outcome of one statistical or numerical check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub n: usize,
    pub pass: bool,
    pub tolerance: f64,
}

/// Minimum sample size accepted by [`ks_test`].
pub const KS_MIN_SAMPLES: usize = 50;

/// P[K > lambda] for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form, fast for small lambda.
        let x = -PI * PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=8)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (m * m * x).exp()
            })
            .sum();
        1.0 - (2.0 * PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// One-sample KS test with the asymptotic Kolmogorov p-value; passes when
/// p >= `level`.
pub fn ks_test(name: &str, samples: &[f64], cdf: impl Fn(f64) -> f64, level: f64) -> Result<TestReport> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: KS_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let d = ks_statistic(samples, cdf);
    let p = kolmogorov_sf(d * (samples.len() as f64).sqrt());
    Ok(TestReport {
        name: name.to_string(),
        statistic: d,
        p_value: Some(p),
        n: samples.len(),
        pass: p >= level,
        tolerance: level,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Fraction of pairs with both coordinates below the thresholds, with its
/// binomial standard error.
pub fn empirical_bivariate_cdf(pairs: &[(f64, f64)], y1: f64, y2: f64) -> Estimate {
    let n = pairs.len();
    if n == 0 {
        return Estimate {
            estimate: f64::NAN,
            std_error: f64::NAN,
        };
    }
    let hits = pairs.iter().filter(|(a, b)| *a <= y1 && *b <= y2).count();
    let p = hits as f64 / n as f64;
    Estimate {
        estimate: p,
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
    }
}

/// |a - b| / sqrt(se_a^2 + se_b^2), with 0/0 read as 0.
pub fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY * diff.signum()
    } else {
        diff / se
    }
}
