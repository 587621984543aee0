//! Maxima of independent stationary Gaussian fields and their convergence
//! to the Brown-Resnick field with variogram 2 gamma.
//!
//! The slowly varying factor is fixed to L = 1, so the spatial scale solves
//! s^alpha = b_n^{-2} in closed form.

use crate::analytics::{ks_test, norm_cdf, BivariateLaw, TestReport};
use crate::error::{invalid, Error, Result};
use crate::exec::{map_replicates_with, Execution};
use crate::gauss::{CholeskyFactor, GaussianDesign};
use crate::ppp::gumbel_cdf;
use crate::report::{bivariate_rows, ExperimentReport, DEFAULT_THRESHOLDS};
use crate::rng::{inverse_norm_cdf, RngStream};
use crate::variogram::{check_cnd, check_points, CovarianceFunction, Gamma, Point, Variogram};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// b_n = sqrt(2 log n) - (log log n / 2 + log(2 sqrt(pi))) / sqrt(2 log n).
pub fn location_normalizer(n: f64) -> f64 {
    let two_log = 2.0 * n.ln();
    two_log.sqrt() - (0.5 * n.ln().ln() + (2.0 * PI.sqrt()).ln()) / two_log.sqrt()
}

/// Gumbel normalization for maxima of n standard Gaussians, with per-axis
/// spatial scales s_i = b_n^{-2 / alpha_i}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub n: u64,
    pub b_n: f64,
    pub scales: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Normalizers {
    /// The isotropic scale (first axis).
    pub fn s_n(&self) -> f64 {
        self.scales[0]
    }

    /// s t, axis by axis. A single scale applies to every axis.
    pub fn scale_point(&self, t: &[f64]) -> Point {
        t.iter()
            .enumerate()
            .map(|(i, x)| x * self.scales[if self.scales.len() == 1 { 0 } else { i }])
            .collect()
    }
}

pub fn normalizers(n: u64, alpha: f64) -> Result<Normalizers> {
    normalizers_anisotropic(n, &[alpha])
}

pub fn normalizers_anisotropic(n: u64, alphas: &[f64]) -> Result<Normalizers> {
    if n < 3 {
        return invalid(format!("`n` must be at least 3, got {n}"));
    }
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a <= 2.0)) {
        return invalid("every exponent must lie in (0, 2]");
    }
    let b_n = location_normalizer(n as f64);
    Ok(Normalizers {
        n,
        b_n,
        scales: alphas.iter().map(|a| b_n.powf(-2.0 / a)).collect(),
        alphas: alphas.to_vec(),
    })
}

/// Mean and covariance of Y_n^w, the rescaled field conditioned on Y_n(0) = w.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMoments {
    pub w: f64,
    pub mu_w: Vec<f64>,
    pub r: DMatrix<f64>,
}

/// mu(t) = -(b^2 + w)(1 - C(s t)) and r(t1, t2) = b^2 (C(s t1 - s t2) - C(s t1) C(s t2)).
pub fn conditional_moments(cov: &CovarianceFunction, norm: &Normalizers, w: f64, sites: &[Point]) -> Result<ConditionalMoments> {
    check_points(cov.dim(), sites)?;
    let b2 = norm.b_n * norm.b_n;
    let scaled: Vec<Point> = sites.iter().map(|t| norm.scale_point(t)).collect();
    let one_minus: Vec<f64> = scaled.iter().map(|t| cov.one_minus(t)).collect();
    let mu_w = one_minus.iter().map(|a| -(b2 + w) * a).collect();
    let n = sites.len();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let d: Vec<f64> = scaled[i].iter().zip(&scaled[j]).map(|(a, b)| a - b).collect();
            // C12 - C1 C2 = a + b - c - ab with a = 1 - C1, b = 1 - C2, c = 1 - C12.
            let (a, b) = (one_minus[i], one_minus[j]);
            let v = b2 * (a + b - cov.one_minus(&d) - a * b);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(ConditionalMoments { w, mu_w, r })
}

/// log P[max of n standard normals <= x].
fn log_max_cdf(n: u64, x: f64) -> f64 {
    n as f64 * (-norm_cdf(-x)).ln_1p()
}

/// Exact CDF of b_n (max_i Z_i - b_n) for i.i.d. standard normal Z_i.
pub fn prelimit_marginal_cdf(n: u64, b_n: f64, y: f64) -> f64 {
    log_max_cdf(n, b_n + y / b_n).exp()
}

/// How [`GaussianMaxima`] draws the componentwise maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaximaMode {
    /// Draw all n vectors.
    BruteForce,
    /// Tail sampling when cheap, brute force otherwise. Levels below
    /// b_n + y_floor / b_n are resolved by an exact fallback.
    Auto { y_floor: f64 },
}

impl Default for MaximaMode {
    fn default() -> Self {
        MaximaMode::Auto { y_floor: -4.0 }
    }
}

/// Above this candidate probability the tail sampler is not worth it.
const TAIL_MAX_CANDIDATE_PROB: f64 = 0.05;

/// Conditional law of the other coordinates given X_j.
#[derive(Clone, Debug)]
struct Conditional {
    others: Vec<usize>,
    coef: Vec<f64>,
    factor: CholeskyFactor,
}

#[derive(Clone, Debug)]
struct TailSampler {
    threshold: f64,
    /// P[Z > threshold].
    tail_prob: f64,
    /// k * tail_prob, the per-vector probability of proposing a candidate.
    candidate_prob: f64,
    conditionals: Vec<Conditional>,
}

/// Componentwise maximum of n i.i.d. N(0, C) vectors with unit-variance C.
///
/// Tail mode draws only the vectors with some coordinate above a threshold
/// u: candidates arrive as Bernoulli(k P[Z > u]) trials, each proposing a
/// vector from X | X_j > u with j uniform, accepted with probability
/// 1 / #{i : X_i > u}. Accepted candidates are exactly the vectors with
/// max > u. If some coordinate never exceeds u, the remaining vectors are
/// drawn from X | max X <= u by rejection, so the result is exact.
#[derive(Clone, Debug)]
pub struct GaussianMaxima {
    n: u64,
    design: GaussianDesign,
    tail: Option<TailSampler>,
}

/// Conditional variances below this are treated as zero.
const DEGENERATE_VARIANCE: f64 = 1e-14;

impl GaussianMaxima {
    pub fn new(corr: DMatrix<f64>, n: u64, b_n: f64, mode: MaximaMode) -> Result<Self> {
        let k = corr.nrows();
        for i in 0..k {
            if (corr[(i, i)] - 1.0).abs() > 1e-12 {
                return invalid("maxima sampler needs a unit-variance covariance");
            }
        }
        let design = GaussianDesign::from_covariance(vec![Vec::new(); k], corr.clone())?;
        let tail = match mode {
            MaximaMode::BruteForce => None,
            MaximaMode::Auto { y_floor } => {
                let threshold = b_n + y_floor / b_n;
                let tail_prob = norm_cdf(-threshold);
                let candidate_prob = k as f64 * tail_prob;
                if candidate_prob <= TAIL_MAX_CANDIDATE_PROB {
                    let conditionals = (0..k).map(|j| conditional(&corr, j)).collect::<Result<_>>()?;
                    Some(TailSampler {
                        threshold,
                        tail_prob,
                        candidate_prob,
                        conditionals,
                    })
                } else {
                    None
                }
            }
        };
        Ok(Self { n, design, tail })
    }

    pub fn dim(&self) -> usize {
        self.design.len()
    }

    pub fn uses_tail_sampler(&self) -> bool {
        self.tail.is_some()
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        match &self.tail {
            None => self.brute_force(rng, self.n, f64::INFINITY),
            Some(t) => self.tail_sample(t, rng),
        }
    }

    /// Max over `count` vectors drawn from X | max X <= cap.
    fn brute_force(&self, rng: &mut RngStream, count: u64, cap: f64) -> Vec<f64> {
        let k = self.dim();
        let (mut z, mut x) = (vec![0.0; k], vec![0.0; k]);
        let mut maxima = vec![f64::NEG_INFINITY; k];
        for _ in 0..count {
            loop {
                self.design.sample_into(rng, &mut z, &mut x);
                if x.iter().all(|v| *v <= cap) {
                    break;
                }
            }
            for (m, v) in maxima.iter_mut().zip(&x) {
                *m = m.max(*v);
            }
        }
        maxima
    }

    fn tail_sample(&self, t: &TailSampler, rng: &mut RngStream) -> Vec<f64> {
        let k = self.dim();
        let mut maxima = vec![f64::NEG_INFINITY; k];
        let mut x = vec![0.0; k];
        let mut z = vec![0.0; k];
        let mut noise = vec![0.0; k];
        let log_fail = (-t.candidate_prob).ln_1p();
        let mut position: u64 = 0;
        let mut accepted: u64 = 0;
        loop {
            let skip = (rng.uniform().ln() / log_fail).floor();
            if skip >= (self.n - position) as f64 {
                break;
            }
            position += skip as u64 + 1;
            let j = ((rng.uniform() * k as f64) as usize).min(k - 1);
            let xj = -inverse_norm_cdf(rng.uniform() * t.tail_prob);
            let c = &t.conditionals[j];
            let m = c.others.len();
            rng.fill_normal(&mut z[..m]);
            c.factor.apply(&z[..m], &mut noise[..m]);
            x[j] = xj;
            for (idx, &i) in c.others.iter().enumerate() {
                x[i] = c.coef[idx] * xj + noise[idx];
            }
            let exceed = x.iter().enumerate().filter(|(i, v)| *i == j || **v > t.threshold).count();
            if exceed == 1 || rng.uniform() * (exceed as f64) < 1.0 {
                accepted += 1;
                for (mx, v) in maxima.iter_mut().zip(&x) {
                    *mx = mx.max(*v);
                }
            }
            if position >= self.n {
                break;
            }
        }
        if maxima.iter().any(|m| *m <= t.threshold) {
            let rest = self.brute_force(rng, self.n - accepted, t.threshold);
            for (mx, v) in maxima.iter_mut().zip(rest) {
                *mx = mx.max(v);
            }
        }
        maxima
    }
}

fn conditional(corr: &DMatrix<f64>, j: usize) -> Result<Conditional> {
    let k = corr.nrows();
    let others: Vec<usize> = (0..k).filter(|&i| i != j).collect();
    let coef: Vec<f64> = others.iter().map(|&i| corr[(i, j)]).collect();
    let m = others.len();
    let mut cov = DMatrix::from_fn(m, m, |a, b| corr[(others[a], others[b])] - coef[a] * coef[b]);
    for a in 0..m {
        if cov[(a, a)] <= DEGENERATE_VARIANCE {
            for b in 0..m {
                cov[(a, b)] = 0.0;
                cov[(b, a)] = 0.0;
            }
        }
    }
    Ok(Conditional {
        others,
        coef,
        factor: CholeskyFactor::factor(&cov)?,
    })
}

/// Tolerances of a convergence experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceOptions {
    pub ks_level: f64,
    pub se_multiplier: f64,
    /// Bivariate rows pass within max(se_multiplier * se, abs_tol).
    pub abs_tol: f64,
    pub mode: MaximaMode,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            ks_level: 0.01,
            se_multiplier: 3.0,
            abs_tol: 0.02,
            mode: MaximaMode::default(),
        }
    }
}

struct MaximaExperiment<'a> {
    name: &'a str,
    corr: DMatrix<f64>,
    norm: Normalizers,
    sites: &'a [Point],
    /// Variogram of the limit field evaluated on site differences.
    limit_gamma: &'a dyn Fn(&[f64], &[f64]) -> f64,
    replicates: usize,
    seed: u64,
    thresholds: &'a [f64],
    opts: ConvergenceOptions,
    exec: Execution,
}

fn run_maxima_experiment(e: MaximaExperiment<'_>) -> Result<ExperimentReport> {
    if e.replicates < crate::analytics::KS_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: crate::analytics::KS_MIN_SAMPLES,
            got: e.replicates,
        });
    }
    let b = e.norm.b_n;
    let n = e.norm.n;
    let sampler = GaussianMaxima::new(e.corr, n, b, e.opts.mode)?;
    let samples: Vec<Vec<f64>> = map_replicates_with(e.exec, e.replicates, |r| {
        let mut rng = RngStream::new(e.seed, r);
        sampler.sample(&mut rng).into_iter().map(|m| b * (m - b)).collect()
    });

    let k = e.sites.len();
    let mut report = ExperimentReport {
        experiment: e.name.to_string(),
        n: Some(n),
        sites: e.sites.to_vec(),
        replicates: e.replicates,
        ..Default::default()
    };
    for j in 0..k {
        let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        report
            .marginal_ks
            .push(ks_test(&format!("marginal_prelimit[site={j}]"), &col, |y| prelimit_marginal_cdf(n, b, y), e.opts.ks_level)?);
        // Reported only: convergence to the Gumbel limit is logarithmic in n.
        let limit = ks_test("gumbel_limit", &col, gumbel_cdf, e.opts.ks_level)?;
        report.metrics.insert(format!("gumbel_limit_ks_d[site={j}]"), limit.statistic);
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let law = BivariateLaw::new((e.limit_gamma)(&e.sites[i], &e.sites[j]))?;
            let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s[i], s[j])).collect();
            report
                .bivariate_table
                .extend(bivariate_rows([i, j], &pairs, &law, e.thresholds, e.opts.se_multiplier, e.opts.abs_tol));
        }
    }
    report.metrics.insert("b_n".into(), b);
    for (i, s) in e.norm.scales.iter().enumerate() {
        report.metrics.insert(format!("s_n[{i}]"), *s);
    }
    report.metrics.insert("max_abs_discrepancy".into(), report.max_abs_discrepancy());
    report.metrics.insert("tail_sampler".into(), if sampler.uses_tail_sampler() { 1.0 } else { 0.0 });
    report.finalize();
    Ok(report)
}

/// Settings shared by the convergence runs.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub replicates: usize,
    pub seed: u64,
    pub thresholds: Vec<f64>,
    pub opts: ConvergenceOptions,
    pub exec: Execution,
}

impl RunSettings {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            opts: ConvergenceOptions::default(),
            exec: Execution::default(),
        }
    }

    pub fn with_opts(mut self, opts: ConvergenceOptions) -> Self {
        self.opts = opts;
        self
    }
}

/// eta_n(t) = max_{i<=n} b_n (X_i(s_n t) - b_n) against the Brown-Resnick law
/// with variogram 2 gamma.
pub fn run_thm17(cov: &CovarianceFunction, gamma: &Variogram, alpha: f64, n: u64, sites: &[Point], run: &RunSettings) -> Result<ExperimentReport> {
    check_points(cov.dim(), sites)?;
    check_points(gamma.dim(), sites)?;
    let norm = normalizers(n, alpha)?;
    let scaled: Vec<Point> = sites.iter().map(|t| norm.scale_point(t)).collect();
    let corr = cov.matrix(&scaled)?;
    let limit = |a: &[f64], b: &[f64]| 2.0 * gamma.gamma_diff(a, b);
    run_maxima_experiment(MaximaExperiment {
        name: "converge-thm17",
        corr,
        norm,
        sites,
        limit_gamma: &limit,
        replicates: run.replicates,
        seed: run.seed,
        thresholds: &run.thresholds,
        opts: run.opts,
        exec: run.exec,
    })
}

/// Triangular array with covariance exp(-gamma(t) / b_n^2) and no spatial
/// rescaling, against the Brown-Resnick law with variogram 2 gamma.
pub fn run_thm22(gamma: &Variogram, n: u64, sites: &[Point], run: &RunSettings) -> Result<ExperimentReport> {
    check_points(gamma.dim(), sites)?;
    if sites.len() >= 2 {
        let cnd = check_cnd(gamma, sites, 1e-9)?;
        if !cnd.pass {
            return invalid(format!("variogram is not negative definite on the sites (violation {:e})", cnd.max_violation));
        }
    }
    let b = location_normalizer(n as f64);
    let norm = Normalizers {
        n,
        b_n: b,
        scales: vec![1.0],
        alphas: vec![],
    };
    if n < 3 {
        return invalid(format!("`n` must be at least 3, got {n}"));
    }
    let cov = CovarianceFunction::exp_variogram(gamma.clone(), b * b)?;
    let corr = cov.matrix(sites)?;
    let limit = |a: &[f64], b: &[f64]| 2.0 * gamma.gamma_diff(a, b);
    run_maxima_experiment(MaximaExperiment {
        name: "converge-thm22",
        corr,
        norm,
        sites,
        limit_gamma: &limit,
        replicates: run.replicates,
        seed: run.seed,
        thresholds: &run.thresholds,
        opts: run.opts,
        exec: run.exec,
    })
}

/// Covariance exp(-sum c_i |t_i|^alpha_i) with axis i rescaled by
/// b_n^{-2/alpha_i}, against the Brown-Resnick law with variogram
/// 2 sum c_i |t_i|^alpha_i.
pub fn run_anisotropic(weights: &[f64], alphas: &[f64], n: u64, sites: &[Point], run: &RunSettings) -> Result<ExperimentReport> {
    if alphas.len() < 2 {
        return invalid("anisotropic runs need dimension >= 2");
    }
    let gamma = Variogram::anisotropic(alphas.to_vec(), weights.to_vec())?;
    check_points(gamma.dim(), sites)?;
    let norm = normalizers_anisotropic(n, alphas)?;
    let cov = CovarianceFunction::exp_variogram(gamma.clone(), 1.0)?;
    let scaled: Vec<Point> = sites.iter().map(|t| norm.scale_point(t)).collect();
    let corr = cov.matrix(&scaled)?;
    let limit = |a: &[f64], b: &[f64]| 2.0 * gamma.gamma_diff(a, b);
    run_maxima_experiment(MaximaExperiment {
        name: "converge-aniso",
        corr,
        norm,
        sites,
        limit_gamma: &limit,
        replicates: run.replicates,
        seed: run.seed,
        thresholds: &run.thresholds,
        opts: run.opts,
        exec: run.exec,
    })
}

/// Normalized maxima of n i.i.d. standard normals, one per replicate.
pub fn normalized_gaussian_maxima(n: u64, replicates: usize, seed: u64, mode: MaximaMode) -> Result<Vec<f64>> {
    let b = location_normalizer(n as f64);
    let sampler = GaussianMaxima::new(DMatrix::from_element(1, 1, 1.0), n, b, mode)?;
    Ok(map_replicates_with(Execution::default(), replicates, |r| {
        b * (sampler.sample(&mut RngStream::new(seed, r))[0] - b)
    }))
}

/// Marginal KS of normalized Gaussian maxima against the exact pre-limit
/// law.
pub fn gaussian_maxima_check(n: u64, replicates: usize, seed: u64, level: f64) -> Result<TestReport> {
    let b = location_normalizer(n as f64);
    let xs = normalized_gaussian_maxima(n, replicates, seed, MaximaMode::default())?;
    ks_test("gaussian_maxima_prelimit", &xs, |y| prelimit_marginal_cdf(n, b, y), level)
}
