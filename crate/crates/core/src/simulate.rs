//! Simulation of eta(t) = max_i (U_i + W_i(t) - sigma^2(t)/2) on a finite
//! point set, and Monte Carlo evaluation of its finite-dimensional CDFs.
//!
//! The supremum over infinitely many atoms is truncated: atoms are drawn in
//! decreasing order of U_i, and drawing stops once U_{i+1} + tau falls below
//! the current minimum of the running maximum, where tau is a calibrated
//! high quantile of sup_t xi(t), xi = W - sigma^2/2. Samples that hit the
//! atom cap are flagged rather than returned as clean.

use crate::error::{invalid, Result};
use crate::exec::{map_replicates_with, Execution};
use crate::gauss::{prepare, GaussianDesign};
use crate::ppp::ExtremalPointStream;
use crate::rng::RngStream;
use crate::variogram::{covariance_matrix, Gamma, Point, VarianceProfile};
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const DEFAULT_PRE_PASS_SIZE: usize = 2000;
pub const DEFAULT_DELTA: f64 = 1e-4;
pub const DEFAULT_HARD_CAP: usize = 10_000;

/// Stream id reserved for stop-rule calibration draws.
pub const CALIBRATION_STREAM: u64 = u64::MAX;

/// Truncation rule for the atom loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub tail_quantile: f64,
    pub pre_pass_size: usize,
    pub delta: f64,
    pub hard_cap: usize,
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        if !self.tail_quantile.is_finite() {
            return invalid("`tail_quantile` must be finite");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return invalid(format!("`delta` must lie in (0, 1), got {}", self.delta));
        }
        if self.hard_cap < 10 {
            return invalid(format!("`hard_cap` must be at least 10, got {}", self.hard_cap));
        }
        Ok(())
    }
}

/// One realization of eta on a point set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub values: Vec<f64>,
    /// Atoms folded into the running maximum; the point that triggered the
    /// stop is drawn but not counted.
    pub n_atoms_used: usize,
    /// Last drawn U minus the minimum of eta over the points at stop time.
    pub truncation_gap: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub jitter_used: f64,
    /// The hard cap was reached before the stop condition held.
    pub flagged: bool,
}

/// Precomputed ingredients for repeated simulation on one point set.
#[derive(Clone, Debug)]
pub struct FieldModel {
    design: GaussianDesign,
    drift: Vec<f64>,
}

impl FieldModel {
    pub fn new<G: Gamma + ?Sized>(gamma: &G, profile: &VarianceProfile, points: &[Point]) -> Result<Self> {
        let design = prepare(gamma, profile, points)?;
        let (_, mean) = covariance_matrix(gamma, profile, points)?;
        Ok(Self {
            design,
            drift: mean.iter().copied().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.drift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drift.is_empty()
    }

    pub fn design(&self) -> &GaussianDesign {
        &self.design
    }

    /// The drifted means -sigma^2(t_i)/2.
    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// One draw of xi = W - sigma^2/2 into `out`.
    #[inline]
    pub fn sample_xi(&self, rng: &mut RngStream, z: &mut [f64], out: &mut [f64]) {
        self.design.sample_into(rng, z, out);
        for (o, d) in out.iter_mut().zip(&self.drift) {
            *o += d;
        }
    }

    pub fn calibrate(&self, pre_pass_size: usize, delta: f64, hard_cap: usize, rng: &mut RngStream) -> Result<StopRule> {
        if pre_pass_size < 500 {
            return invalid(format!("`pre_pass_size` must be at least 500, got {pre_pass_size}"));
        }
        let n = self.len();
        let (mut z, mut xi) = (vec![0.0; n], vec![0.0; n]);
        let mut sups: Vec<f64> = (0..pre_pass_size)
            .map(|_| {
                self.sample_xi(rng, &mut z, &mut xi);
                xi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let m = sups.len() as f64;
        let mean = sups.iter().sum::<f64>() / m;
        let sd = (sups.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        sups.sort_by(f64::total_cmp);
        let q = empirical_quantile(&sups, 1.0 - delta / 10.0);
        let rule = StopRule {
            tail_quantile: q + 2.0 * sd,
            pre_pass_size,
            delta,
            hard_cap,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn simulate(&self, stop: &StopRule, rng: RngStream) -> FieldSample {
        let n = self.len();
        let (seed, stream_id) = (rng.seed(), rng.stream_id());
        let mut ppp = ExtremalPointStream::new(rng.derive(1));
        let mut path_rng = rng;
        let (mut z, mut xi) = (vec![0.0; n], vec![0.0; n]);
        let mut running = vec![f64::NEG_INFINITY; n];
        let mut min_running = f64::NEG_INFINITY;
        let mut atoms = 0;
        let mut flagged = false;
        let mut last_u;
        loop {
            last_u = ppp.next_point();
            if atoms > 0 && last_u + stop.tail_quantile < min_running {
                break;
            }
            if atoms >= stop.hard_cap {
                flagged = true;
                break;
            }
            self.sample_xi(&mut path_rng, &mut z, &mut xi);
            for (r, x) in running.iter_mut().zip(&xi) {
                *r = r.max(last_u + x);
            }
            min_running = running.iter().copied().fold(f64::INFINITY, f64::min);
            atoms += 1;
        }
        FieldSample {
            truncation_gap: last_u - min_running,
            values: running,
            n_atoms_used: atoms,
            seed,
            stream_id,
            jitter_used: self.design.jitter_used(),
            flagged,
        }
    }
}

/// Empirical quantile of sorted data (inverse of the empirical CDF).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Draws `pre_pass_size` paths of xi and sets tau to the empirical
/// (1 - delta/10) quantile of sup_t xi(t) plus two standard deviations of
/// that sup.
pub fn calibrate_stop_rule<G: Gamma + ?Sized>(
    gamma: &G,
    profile: &VarianceProfile,
    points: &[Point],
    pre_pass_size: usize,
    delta: f64,
    rng: &mut RngStream,
) -> Result<StopRule> {
    FieldModel::new(gamma, profile, points)?.calibrate(pre_pass_size, delta, DEFAULT_HARD_CAP, rng)
}

pub fn simulate_field<G: Gamma + ?Sized>(
    gamma: &G,
    profile: &VarianceProfile,
    points: &[Point],
    stop: &StopRule,
    rng: RngStream,
) -> Result<FieldSample> {
    stop.validate()?;
    Ok(FieldModel::new(gamma, profile, points)?.simulate(stop, rng))
}

/// A batch of independent replicates; replicate r uses stream (seed, r).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldBatch {
    pub points: Vec<Point>,
    pub stop: StopRule,
    pub samples: Vec<FieldSample>,
}

impl FieldBatch {
    pub fn flagged_count(&self) -> usize {
        self.samples.iter().filter(|s| s.flagged).count()
    }

    /// Values at site `j` over unflagged samples.
    pub fn site_values(&self, j: usize) -> Vec<f64> {
        self.clean().map(|s| s.values[j]).collect()
    }

    /// (eta(t_i), eta(t_j)) over unflagged samples.
    pub fn pairs(&self, i: usize, j: usize) -> Vec<(f64, f64)> {
        self.clean().map(|s| (s.values[i], s.values[j])).collect()
    }

    pub fn clean(&self) -> impl Iterator<Item = &FieldSample> {
        self.samples.iter().filter(|s| !s.flagged)
    }

    pub fn summary(&self) -> BatchSummary {
        let n = self.samples.len().max(1) as f64;
        BatchSummary {
            replicates: self.samples.len(),
            flagged: self.flagged_count(),
            mean_atoms: self.samples.iter().map(|s| s.n_atoms_used as f64).sum::<f64>() / n,
            max_atoms: self.samples.iter().map(|s| s.n_atoms_used).max().unwrap_or(0),
            max_truncation_gap: self.samples.iter().map(|s| s.truncation_gap).fold(f64::NEG_INFINITY, f64::max),
            tail_quantile: self.stop.tail_quantile,
            jitter_used: self.samples.first().map_or(0.0, |s| s.jitter_used),
        }
    }

    /// One row per replicate: replicate index, one column per site, then
    /// diagnostics.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["replicate".to_string()];
        header.extend((0..self.points.len()).map(|j| format!("site_{j}")));
        header.extend(["n_atoms_used", "truncation_gap", "jitter_used", "flagged"].map(String::from));
        let io = |e: csv::Error| crate::error::Error::InvalidArgument(format!("csv write failed: {e}"));
        w.write_record(&header).map_err(io)?;
        for s in &self.samples {
            let mut row = vec![s.stream_id.to_string()];
            row.extend(s.values.iter().map(|v| v.to_string()));
            row.push(s.n_atoms_used.to_string());
            row.push(s.truncation_gap.to_string());
            row.push(s.jitter_used.to_string());
            row.push(s.flagged.to_string());
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| crate::error::Error::InvalidArgument(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchSummary {
    pub replicates: usize,
    pub flagged: usize,
    pub mean_atoms: f64,
    pub max_atoms: usize,
    pub max_truncation_gap: f64,
    pub tail_quantile: f64,
    pub jitter_used: f64,
}

/// Settings for [`simulate_batch`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopSettings {
    pub pre_pass_size: usize,
    pub delta: f64,
    pub hard_cap: usize,
}

impl Default for StopSettings {
    fn default() -> Self {
        Self {
            pre_pass_size: DEFAULT_PRE_PASS_SIZE,
            delta: DEFAULT_DELTA,
            hard_cap: DEFAULT_HARD_CAP,
        }
    }
}

/// Calibrates a stop rule on stream (seed, CALIBRATION_STREAM) and runs
/// `replicates` independent fields.
pub fn simulate_batch<G: Gamma + ?Sized>(
    gamma: &G,
    profile: &VarianceProfile,
    points: &[Point],
    settings: &StopSettings,
    seed: u64,
    replicates: usize,
) -> Result<FieldBatch> {
    simulate_batch_with(Execution::default(), gamma, profile, points, settings, seed, replicates)
}

pub fn simulate_batch_with<G: Gamma + ?Sized>(
    exec: Execution,
    gamma: &G,
    profile: &VarianceProfile,
    points: &[Point],
    settings: &StopSettings,
    seed: u64,
    replicates: usize,
) -> Result<FieldBatch> {
    let model = FieldModel::new(gamma, profile, points)?;
    let mut cal = RngStream::new(seed, CALIBRATION_STREAM);
    let stop = model.calibrate(settings.pre_pass_size, settings.delta, settings.hard_cap, &mut cal)?;
    let samples = map_replicates_with(exec, replicates, |r| model.simulate(&stop, RngStream::new(seed, r)));
    Ok(FieldBatch {
        points: points.to_vec(),
        stop,
        samples,
    })
}

/// Estimates P[eta(t_j) <= y_j for all j] = exp(-E exp max_j (xi(t_j) - y_j))
/// by averaging over `m` Gaussian draws. The standard error follows from
/// the delta method.
pub fn fdd_cdf_mc<G: Gamma + ?Sized>(
    gamma: &G,
    profile: &VarianceProfile,
    points: &[Point],
    thresholds: &[f64],
    m: usize,
    seed: u64,
) -> Result<crate::analytics::Estimate> {
    Ok(fdd_cdf_mc_many(gamma, profile, points, &[thresholds.to_vec()], m, seed)?[0])
}

/// [`fdd_cdf_mc`] for several threshold vectors on shared draws.
pub fn fdd_cdf_mc_many<G: Gamma + ?Sized>(
    gamma: &G,
    profile: &VarianceProfile,
    points: &[Point],
    thresholds: &[Vec<f64>],
    m: usize,
    seed: u64,
) -> Result<Vec<crate::analytics::Estimate>> {
    if m < 100 {
        return invalid(format!("`m` must be at least 100, got {m}"));
    }
    for y in thresholds {
        if y.len() != points.len() {
            return invalid(format!("threshold vector has length {}, expected {}", y.len(), points.len()));
        }
    }
    let model = FieldModel::new(gamma, profile, points)?;
    let k = points.len();
    // Batches of draws keep per-stream setup cheap; batch b uses stream (seed, b).
    const BATCH: usize = 256;
    let batches = m.div_ceil(BATCH);
    let partial: Vec<Vec<(f64, f64)>> = map_replicates_with(Execution::default(), batches, |b| {
        let mut rng = RngStream::new(seed, b);
        let count = BATCH.min(m - b as usize * BATCH);
        let (mut z, mut xi) = (vec![0.0; k], vec![0.0; k]);
        let mut acc = vec![(0.0, 0.0); thresholds.len()];
        for _ in 0..count {
            model.sample_xi(&mut rng, &mut z, &mut xi);
            for (a, y) in acc.iter_mut().zip(thresholds) {
                let e = xi.iter().zip(y).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max).exp();
                a.0 += e;
                a.1 += e * e;
            }
        }
        acc
    });
    let mf = m as f64;
    Ok((0..thresholds.len())
        .map(|i| {
            let (s, s2) = partial.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p[i].0, acc.1 + p[i].1));
            let mean = s / mf;
            let var = ((s2 - mf * mean * mean) / (mf - 1.0)).max(0.0);
            let est = (-mean).exp();
            crate::analytics::Estimate {
                estimate: est,
                std_error: est * (var / mf).sqrt(),
            }
        })
        .collect())
}
