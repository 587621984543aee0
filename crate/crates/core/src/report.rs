use crate::analytics::{empirical_bivariate_cdf, z_score, BivariateLaw, TestReport};
use crate::variogram::Point;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One threshold pair of a bivariate comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BivariateRow {
    pub pair: [usize; 2],
    pub y1: f64,
    pub y2: f64,
    pub empirical: f64,
    pub se: f64,
    pub oracle: f64,
    pub z_score: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Structured result of a verification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct ExperimentReport {
    pub experiment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    pub sites: Vec<Point>,
    pub replicates: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub marginal_ks: Vec<TestReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub bivariate_table: Vec<BivariateRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<TestReport>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    pub pass: bool,
}

impl ExperimentReport {
    pub fn max_abs_discrepancy(&self) -> f64 {
        self.bivariate_table
            .iter()
            .map(|r| (r.empirical - r.oracle).abs())
            .fold(0.0, f64::max)
    }

    /// Recomputes `pass` from all contained checks.
    pub fn finalize(&mut self) {
        self.pass = self.marginal_ks.iter().all(|r| r.pass)
            && self.bivariate_table.iter().all(|r| r.pass)
            && self.checks.iter().all(|r| r.pass);
    }
}

/// Default threshold grid for bivariate comparisons.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [-1.0, 0.0, 1.0];

/// Compares empirical bivariate CDFs of `pairs` with `law` on the grid
/// `ys` x `ys`; a row passes when |diff| <= max(se_mult * se, abs_tol).
pub fn bivariate_rows(
    pair: [usize; 2],
    pairs: &[(f64, f64)],
    law: &BivariateLaw,
    ys: &[f64],
    se_mult: f64,
    abs_tol: f64,
) -> Vec<BivariateRow> {
    let mut rows = Vec::with_capacity(ys.len() * ys.len());
    for &y1 in ys {
        for &y2 in ys {
            let e = empirical_bivariate_cdf(pairs, y1, y2);
            let oracle = law.cdf(y1, y2);
            let diff = e.estimate - oracle;
            let tolerance = (se_mult * e.std_error).max(abs_tol);
            rows.push(BivariateRow {
                pair,
                y1,
                y2,
                empirical: e.estimate,
                se: e.std_error,
                oracle,
                z_score: z_score(diff, e.std_error),
                tolerance,
                pass: diff.abs() <= tolerance,
            });
        }
    }
    rows
}

/// Two independent empirical bivariate CDFs compared cell by cell; a cell
/// passes when the difference is within `se_mult` pooled standard errors.
pub fn two_sample_bivariate(name: &str, a: &[(f64, f64)], b: &[(f64, f64)], ys: &[f64], se_mult: f64) -> Vec<TestReport> {
    let mut out = Vec::new();
    for &y1 in ys {
        for &y2 in ys {
            let ea = empirical_bivariate_cdf(a, y1, y2);
            let eb = empirical_bivariate_cdf(b, y1, y2);
            let pooled = (ea.std_error.powi(2) + eb.std_error.powi(2)).sqrt();
            let diff = ea.estimate - eb.estimate;
            out.push(TestReport {
                name: format!("{name}[y1={y1},y2={y2}]"),
                statistic: z_score(diff, pooled),
                p_value: None,
                n: a.len().min(b.len()),
                pass: diff.abs() <= se_mult * pooled,
                tolerance: se_mult,
            });
        }
    }
    out
}
