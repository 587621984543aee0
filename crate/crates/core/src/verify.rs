//! Simulation and Laplace-level checks packaged as [`ExperimentReport`]s.

use crate::analytics::{ks_test, BivariateLaw, TestReport};
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::ppp::gumbel_cdf;
use crate::report::{bivariate_rows, two_sample_bivariate, ExperimentReport, DEFAULT_THRESHOLDS};
use crate::rng::RngStream;
use crate::simulate::{fdd_cdf_mc_many, simulate_batch_with, FieldBatch, StopSettings};
use crate::stationarity::{gaussian_laplace_with, lq_decomposition, shift_invariance_check_with, Drift, LaplaceConfig};
use crate::variogram::{check_points, Gamma, Point, VarianceProfile, Variogram, VariogramKind};

/// Replicates, seed and stop rule of a simulation-based check.
#[derive(Clone, Debug, PartialEq)]
pub struct SimRun {
    pub replicates: usize,
    pub seed: u64,
    pub stop: StopSettings,
    pub exec: Execution,
}

impl SimRun {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            stop: StopSettings::default(),
            exec: Execution::default(),
        }
    }

    fn batch<G: Gamma + ?Sized>(&self, gamma: &G, profile: &VarianceProfile, sites: &[Point], seed: u64) -> Result<FieldBatch> {
        if self.replicates == 0 {
            return invalid("`replicates` must be at least 1");
        }
        simulate_batch_with(self.exec, gamma, profile, sites, &self.stop, seed, self.replicates)
    }
}

/// Statistical settings of the simulation checks.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    pub ks_level: f64,
    pub se_multiplier: f64,
    pub thresholds: Vec<f64>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            ks_level: 0.01,
            se_multiplier: 3.0,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

fn batch_metrics(report: &mut ExperimentReport, batch: &FieldBatch, prefix: &str) {
    let s = batch.summary();
    report.metrics.insert(format!("{prefix}flagged"), s.flagged as f64);
    report.metrics.insert(format!("{prefix}mean_atoms"), s.mean_atoms);
    report.metrics.insert(format!("{prefix}max_truncation_gap"), s.max_truncation_gap);
    report.metrics.insert(format!("{prefix}tail_quantile"), s.tail_quantile);
}

fn check_pair(pair: [usize; 2], n: usize) -> Result<()> {
    if pair[0] >= n || pair[1] >= n || pair[0] == pair[1] {
        return invalid(format!("site pair {pair:?} is not two distinct indices below {n}"));
    }
    Ok(())
}

/// Per-site KS against the standard Gumbel law and, for each listed pair,
/// the bivariate CDF against the closed form with gamma(t_i - t_j).
/// Returns the report and the batch it was computed from.
pub fn verify_field<G: Gamma + ?Sized>(
    gamma: &G,
    profile: &VarianceProfile,
    sites: &[Point],
    pairs: &[[usize; 2]],
    run: &SimRun,
    opts: &CheckOptions,
) -> Result<(ExperimentReport, FieldBatch)> {
    check_points(gamma.dim(), sites)?;
    for p in pairs {
        check_pair(*p, sites.len())?;
    }
    let batch = run.batch(gamma, profile, sites, run.seed)?;
    let mut report = ExperimentReport {
        experiment: "verify_margins".into(),
        sites: sites.to_vec(),
        replicates: run.replicates,
        ..Default::default()
    };
    for j in 0..sites.len() {
        report.marginal_ks.push(ks_test(&format!("gumbel_margin[site={j}]"), &batch.site_values(j), gumbel_cdf, opts.ks_level)?);
    }
    for &[i, j] in pairs {
        let law = BivariateLaw::new(gamma.gamma_diff(&sites[i], &sites[j]))?;
        report
            .bivariate_table
            .extend(bivariate_rows([i, j], &batch.pairs(i, j), &law, &opts.thresholds, opts.se_multiplier, 0.0));
    }
    batch_metrics(&mut report, &batch, "");
    if !report.bivariate_table.is_empty() {
        report.metrics.insert("max_abs_discrepancy".into(), report.max_abs_discrepancy());
    }
    report.finalize();
    Ok((report, batch))
}

/// Compares the empirical bivariate CDFs of two site pairs from one batch.
pub fn verify_shift<G: Gamma + ?Sized>(
    gamma: &G,
    profile: &VarianceProfile,
    sites: &[Point],
    first: [usize; 2],
    second: [usize; 2],
    run: &SimRun,
    opts: &CheckOptions,
) -> Result<ExperimentReport> {
    check_points(gamma.dim(), sites)?;
    check_pair(first, sites.len())?;
    check_pair(second, sites.len())?;
    let batch = run.batch(gamma, profile, sites, run.seed)?;
    let mut report = ExperimentReport {
        experiment: "verify_stationarity".into(),
        sites: sites.to_vec(),
        replicates: run.replicates,
        checks: two_sample_bivariate(
            &format!("shift{first:?}vs{second:?}"),
            &batch.pairs(first[0], first[1]),
            &batch.pairs(second[0], second[1]),
            &opts.thresholds,
            opts.se_multiplier,
        ),
        ..Default::default()
    };
    batch_metrics(&mut report, &batch, "");
    report.finalize();
    Ok(report)
}

/// Runs the same variogram under two variance profiles, on independent
/// seeds, and compares the bivariate CDFs of `pair`.
pub fn verify_profiles<G: Gamma + ?Sized>(
    gamma: &G,
    profiles: [VarianceProfile; 2],
    sites: &[Point],
    pair: [usize; 2],
    run: &SimRun,
    opts: &CheckOptions,
) -> Result<ExperimentReport> {
    check_points(gamma.dim(), sites)?;
    check_pair(pair, sites.len())?;
    let a = run.batch(gamma, &profiles[0], sites, run.seed)?;
    let b = run.batch(gamma, &profiles[1], sites, run.seed.wrapping_add(1))?;
    let mut report = ExperimentReport {
        experiment: "verify_profiles".into(),
        sites: sites.to_vec(),
        replicates: run.replicates,
        checks: two_sample_bivariate("profile", &a.pairs(pair[0], pair[1]), &b.pairs(pair[0], pair[1]), &opts.thresholds, opts.se_multiplier),
        ..Default::default()
    };
    batch_metrics(&mut report, &a, "first.");
    batch_metrics(&mut report, &b, "second.");
    report.finalize();
    Ok(report)
}

/// Monte Carlo finite-dimensional CDFs at each threshold vector. For two
/// sites each estimate is also checked against the closed form within
/// `se_multiplier` standard errors.
pub fn verify_cdf<G: Gamma + ?Sized>(
    gamma: &G,
    profile: &VarianceProfile,
    sites: &[Point],
    thresholds: &[Vec<f64>],
    m: usize,
    seed: u64,
    se_multiplier: f64,
) -> Result<ExperimentReport> {
    check_points(gamma.dim(), sites)?;
    let est = fdd_cdf_mc_many(gamma, profile, sites, thresholds, m, seed)?;
    let law = match sites.len() {
        2 => Some(BivariateLaw::new(gamma.gamma_diff(&sites[0], &sites[1]))?),
        _ => None,
    };
    let mut report = ExperimentReport {
        experiment: "cdf".into(),
        sites: sites.to_vec(),
        replicates: m,
        ..Default::default()
    };
    for (y, e) in thresholds.iter().zip(&est) {
        let key = format!("{y:?}");
        report.metrics.insert(format!("estimate{key}"), e.estimate);
        report.metrics.insert(format!("se{key}"), e.std_error);
        if let Some(law) = &law {
            let oracle = law.cdf(y[0], y[1]);
            report.metrics.insert(format!("oracle{key}"), oracle);
            let diff = e.estimate - oracle;
            report.checks.push(TestReport {
                name: format!("closed_form{key}"),
                statistic: crate::analytics::z_score(diff, e.std_error),
                p_value: None,
                n: m,
                pass: diff.abs() <= se_multiplier * e.std_error,
                tolerance: se_multiplier,
            });
        }
    }
    report.finalize();
    Ok(report)
}

fn uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

fn random_point(rng: &mut RngStream, dim: usize, half_width: f64) -> Point {
    (0..dim).map(|_| uniform(rng, -half_width, half_width)).collect()
}

/// Simplex weights; with probability 1/4 the first is zero.
fn random_weights(rng: &mut RngStream, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.exponential()).collect();
    if n > 1 && rng.uniform() < 0.25 {
        w[0] = 0.0;
    }
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    let rest: f64 = w[..n - 1].iter().sum();
    w[n - 1] = (1.0 - rest).max(0.0);
    w
}

/// Settings of [`verify_laplace`].
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceRun {
    pub configs: usize,
    pub shifts: usize,
    pub max_sites: usize,
    pub tol: f64,
    pub seed: u64,
}

impl LaplaceRun {
    pub fn new(configs: usize, seed: u64) -> Self {
        Self {
            configs,
            shifts: 10,
            max_sites: 5,
            tol: 1e-10,
            seed,
        }
    }
}

/// Draws random Laplace configurations (sites in [-3, 3]^d, simplex
/// weights, shifts in [-5, 5]^d) and reports:
/// shift invariance at `tol`, agreement of the transform across variance
/// profiles and with exp(L + Q/2) at 1e-12, and, unless the variogram is
/// identically zero, that removing the drift produces a violation above 1e-3.
pub fn verify_laplace(v: &Variogram, run: &LaplaceRun) -> Result<ExperimentReport> {
    if run.configs == 0 || run.shifts == 0 || run.max_sites == 0 {
        return invalid("`configs`, `shifts` and `max_sites` must be positive");
    }
    let d = v.dim();
    let mut rng = RngStream::new(run.seed, 0);
    let (mut shift_worst, mut profile_worst, mut lq_worst, mut control_worst) = (0f64, 0f64, 0f64, 0f64);
    for _ in 0..run.configs {
        let n = 1 + (rng.uniform() * run.max_sites as f64) as usize;
        let sites: Vec<Point> = (0..n).map(|_| random_point(&mut rng, d, 3.0)).collect();
        let weights = random_weights(&mut rng, n);
        let shifts: Vec<Point> = (0..run.shifts).map(|_| random_point(&mut rng, d, 5.0)).collect();
        let sigma0_sq = uniform(&mut rng, 0.0, 5.0);
        let cfg = LaplaceConfig::new(v.clone(), VarianceProfile::ZeroAtOrigin, sites, weights)?;

        let eval = |drift: Drift| {
            let cfg = &cfg;
            move |s: &[Point], u: &[f64]| {
                let c = LaplaceConfig::new(cfg.variogram.clone(), cfg.profile, s.to_vec(), u.to_vec())?;
                gaussian_laplace_with(&c, drift)
            }
        };
        let r = shift_invariance_check_with("shift", &cfg.sites, &cfg.weights, &shifts, run.tol, eval(Drift::Standard))?;
        shift_worst = shift_worst.max(r.statistic);
        let r = shift_invariance_check_with("control", &cfg.sites, &cfg.weights, &shifts, run.tol, eval(Drift::Removed))?;
        control_worst = control_worst.max(r.statistic);

        let base = gaussian_laplace_with(&cfg, Drift::Standard)?;
        let shifted = LaplaceConfig {
            profile: VarianceProfile::Shifted { sigma0_sq },
            ..cfg.clone()
        };
        let other = gaussian_laplace_with(&shifted, Drift::Standard)?;
        profile_worst = profile_worst.max((base - other).abs() / base.max(1.0));
        let p = lq_decomposition(&cfg);
        lq_worst = lq_worst.max((base - (p.L + p.Q / 2.0).exp()).abs() / base.max(1.0));
    }
    let check = |name: &str, statistic: f64, tolerance: f64, pass: bool| TestReport {
        name: name.into(),
        statistic,
        p_value: None,
        n: run.configs,
        pass,
        tolerance,
    };
    let mut checks = vec![
        check("laplace_shift_invariance", shift_worst, run.tol, shift_worst <= run.tol),
        check("profile_independence", profile_worst, 1e-12, profile_worst <= 1e-12),
        check("lq_consistency", lq_worst, 1e-12, lq_worst <= 1e-12),
    ];
    if !matches!(v.kind(), VariogramKind::Zero) {
        checks.push(check("drift_removed_control", control_worst, 1e-3, control_worst > 1e-3));
    }
    let mut report = ExperimentReport {
        experiment: "verify_laplace".into(),
        replicates: run.configs,
        checks,
        ..Default::default()
    };
    report.finalize();
    Ok(report)
}
