//! Top-point decomposition of drifted Gaussian paths on grids, and Monte
//! Carlo checks of the drift condition and of mark independence.
//!
//! Every quantity here is relative to the grid: the grid maximum stands in
//! for the supremum over the whole space.

use crate::analytics::TestReport;
use crate::error::{invalid, Error, Result};
use crate::exec::{map_replicates_with, Execution};
use crate::ppp::ExtremalPointStream;
use crate::report::ExperimentReport;
use crate::rng::RngStream;
use crate::simulate::{FieldModel, CALIBRATION_STREAM, DEFAULT_DELTA, DEFAULT_HARD_CAP, DEFAULT_PRE_PASS_SIZE};
use crate::variogram::{Gamma, Point, VarianceProfile};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::io::Write;

/// Location T and height M of a path's grid maximum, and the re-centered
/// path F(g - T) = xi(g) - M.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopDecomposition {
    pub top: Point,
    pub top_index: usize,
    pub max: f64,
    /// g - T for every grid point g, in grid order.
    pub offsets: Vec<Point>,
    /// xi(g) - M, aligned with `offsets`.
    pub values: Vec<f64>,
}

impl TopDecomposition {
    /// F at `offset`, if the shifted grid covers it (coordinates compared
    /// within `tol`).
    pub fn value_at(&self, offset: &[f64], tol: f64) -> Option<f64> {
        self.offsets
            .iter()
            .position(|o| o.iter().zip(offset).all(|(a, b)| (a - b).abs() <= tol))
            .map(|i| self.values[i])
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Ties for the maximum go to the lexicographically smallest grid point.
pub fn extract_top(values: &[f64], grid: &[Point]) -> Result<TopDecomposition> {
    if grid.is_empty() {
        return invalid("`grid` must be non-empty");
    }
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    if values.iter().any(|v| v.is_nan()) {
        return invalid("path values must not be NaN");
    }
    let mut best = 0;
    for i in 1..values.len() {
        let better = values[i] > values[best] || (values[i] == values[best] && lex_cmp(&grid[i], &grid[best]) == Ordering::Less);
        if better {
            best = i;
        }
    }
    let top = grid[best].clone();
    let max = values[best];
    Ok(TopDecomposition {
        offsets: grid.iter().map(|g| g.iter().zip(&top).map(|(a, b)| a - b).collect()).collect(),
        values: values.iter().map(|v| v - max).collect(),
        top,
        top_index: best,
        max,
    })
}

/// Regular grid start + k * step, enumerated in row-major order (which is
/// lexicographic order for positive steps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub start: Vec<f64>,
    pub step: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Lattice {
    pub fn new(start: Vec<f64>, step: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let l = Self { start, step, shape };
        l.validate()?;
        Ok(l)
    }

    /// The 1-d lattice {-half_width, ..., half_width} with spacing `step`.
    pub fn symmetric_1d(half_width: f64, step: f64) -> Result<Self> {
        let k = (half_width / step).round() as usize;
        Self::new(vec![-(k as f64) * step], vec![step], vec![2 * k + 1])
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.start.len();
        if d == 0 || self.step.len() != d || self.shape.len() != d {
            return invalid("`start`, `step` and `shape` must have the same non-zero length");
        }
        if self.step.iter().any(|s| !(s.is_finite() && *s > 0.0)) || self.start.iter().any(|s| !s.is_finite()) {
            return invalid("`step` must be positive and `start` finite");
        }
        if self.shape.contains(&0) {
            return invalid("`shape` entries must be positive");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<Point> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; d];
        for _ in 0..self.len() {
            out.push((0..d).map(|a| self.start[a] + idx[a] as f64 * self.step[a]).collect());
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < self.shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }

    /// Every difference of two lattice points, in row-major order.
    pub fn offsets(&self) -> Vec<Point> {
        let diff = Lattice {
            start: self.step.iter().zip(&self.shape).map(|(s, n)| -s * (*n as f64 - 1.0)).collect(),
            step: self.step.clone(),
            shape: self.shape.iter().map(|n| 2 * n - 1).collect(),
        };
        diff.points()
    }
}

/// Writes decompositions as CSV: T coordinates, M, then F at each of
/// `offsets` (empty where the shifted grid does not cover the offset).
pub fn write_top_csv<W: Write>(tops: &[TopDecomposition], offsets: &[Point], out: W) -> Result<()> {
    let d = tops.first().map_or(0, |t| t.top.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..d).map(|a| format!("T_{a}")).collect();
    header.push("M".into());
    header.extend(offsets.iter().map(|o| {
        let parts: Vec<String> = o.iter().map(|x| x.to_string()).collect();
        format!("F({})", parts.join(";"))
    }));
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(&header).map_err(io)?;
    for t in tops {
        let mut row: Vec<String> = t.top.iter().map(|x| x.to_string()).collect();
        row.push(t.max.to_string());
        for o in offsets {
            row.push(t.value_at(o, 1e-9).map_or(String::new(), |v| v.to_string()));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}

/// Grid points with norm in [R, R + 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Ring {
    /// Both segments +-[R, R + 1] with spacing `step`.
    Line { step: f64 },
    /// `angles` equally spaced directions at `radii` equally spaced norms.
    Polar { angles: usize, radii: usize },
}

impl Default for Ring {
    fn default() -> Self {
        Ring::Line { step: 0.25 }
    }
}

impl Ring {
    pub fn dim(&self) -> usize {
        match self {
            Ring::Line { .. } => 1,
            Ring::Polar { .. } => 2,
        }
    }

    pub fn points(&self, r: f64) -> Result<Vec<Point>> {
        match *self {
            Ring::Line { step } => {
                if !(step > 0.0 && step <= 1.0) {
                    return invalid("ring `step` must lie in (0, 1]");
                }
                let k = (1.0 / step).round() as usize;
                let mut out = Vec::with_capacity(2 * k + 2);
                for i in 0..=k {
                    let x = r + i as f64 * step;
                    out.push(vec![-x]);
                    out.push(vec![x]);
                }
                Ok(out)
            }
            Ring::Polar { angles, radii } => {
                if angles == 0 || radii < 2 {
                    return invalid("polar rings need `angles` >= 1 and `radii` >= 2");
                }
                let mut out = Vec::with_capacity(angles * radii);
                for j in 0..radii {
                    let rho = r + j as f64 / (radii - 1) as f64;
                    for a in 0..angles {
                        let th = std::f64::consts::TAU * a as f64 / angles as f64;
                        out.push(vec![rho * th.cos(), rho * th.sin()]);
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Settings of [`drift_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSettings {
    pub radii: Vec<f64>,
    pub threshold: f64,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub ring: Ring,
    /// The last exceedance probability must not exceed this.
    #[serde(default = "default_vanishing_tol")]
    pub vanishing_tol: f64,
}

fn default_vanishing_tol() -> f64 {
    0.01
}

/// Estimates p(R) = P[max over the ring at R of xi > threshold] for each
/// radius. Passes when p is non-increasing in R and the last value is at
/// most `vanishing_tol`.
pub fn drift_check<G: Gamma + ?Sized>(gamma: &G, profile: &VarianceProfile, s: &DriftSettings, exec: Execution) -> Result<ExperimentReport> {
    if s.radii.is_empty() || s.radii.windows(2).any(|w| w[0] >= w[1]) || s.radii[0] < 0.0 {
        return invalid("`radii` must be non-negative and strictly increasing");
    }
    if s.replicates == 0 {
        return invalid("`replicates` must be at least 1");
    }
    if gamma.dim() != s.ring.dim() {
        return Err(Error::DimensionMismatch {
            expected: gamma.dim(),
            got: s.ring.dim(),
        });
    }
    let mut report = ExperimentReport {
        experiment: "m3-drift".into(),
        replicates: s.replicates,
        ..Default::default()
    };
    let mut probs = Vec::with_capacity(s.radii.len());
    for (k, &r) in s.radii.iter().enumerate() {
        let points = s.ring.points(r)?;
        let model = FieldModel::new(gamma, profile, &points)?;
        let n = points.len();
        let hits: Vec<bool> = map_replicates_with(exec, s.replicates, |rep| {
            let mut rng = RngStream::new(s.seed, rep).derive(k as u64);
            let (mut z, mut xi) = (vec![0.0; n], vec![0.0; n]);
            model.sample_xi(&mut rng, &mut z, &mut xi);
            xi.iter().any(|x| *x > s.threshold)
        });
        let p = hits.iter().filter(|h| **h).count() as f64 / s.replicates as f64;
        report.metrics.insert(format!("p[R={r}]"), p);
        report.metrics.insert(format!("se[R={r}]"), (p * (1.0 - p) / s.replicates as f64).sqrt());
        probs.push(p);
    }
    let worst_increase = probs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    report.checks.push(TestReport {
        name: "exceedance_non_increasing".into(),
        statistic: worst_increase,
        p_value: None,
        n: s.replicates,
        pass: worst_increase <= 0.0,
        tolerance: 0.0,
    });
    let last = *probs.last().unwrap();
    report.checks.push(TestReport {
        name: "exceedance_vanishes".into(),
        statistic: last,
        p_value: None,
        n: s.replicates,
        pass: last <= s.vanishing_tol,
        tolerance: s.vanishing_tol,
    });
    report.finalize();
    Ok(report)
}

/// Ratios gamma(t) / log t along the grid and whether their minimum over the
/// tail half exceeds 8.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCriterion {
    pub ratios: Vec<f64>,
    pub tail_min: f64,
    pub verdict: bool,
}

pub fn remark15_criterion<G: Gamma + ?Sized>(gamma: &G, t_grid: &[f64]) -> Result<DriftCriterion> {
    if gamma.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: gamma.dim(),
        });
    }
    if t_grid.is_empty() || t_grid[0] <= 1.0 || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("`t_grid` must be strictly increasing with every entry > 1");
    }
    let ratios: Vec<f64> = t_grid.iter().map(|t| gamma.gamma(&[*t]) / t.ln()).collect();
    let tail_min = ratios[ratios.len() / 2..].iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DriftCriterion {
        ratios,
        tail_min,
        verdict: tail_min > 8.0,
    })
}

/// Settings of [`mark_independence_probe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkProbeSettings {
    pub band: (f64, f64),
    /// Independent Poisson streams; every atom of a stream is used.
    pub replicates: usize,
    pub seed: u64,
    /// Offsets at which F is correlated with the top height.
    pub offsets: Vec<Point>,
    #[serde(default = "default_min_atoms")]
    pub min_atoms: usize,
    /// Per-stream cap on drawn atoms; streams normally stop earlier, once
    /// no further atom can reach the band.
    #[serde(default = "default_max_atoms")]
    pub max_atoms: usize,
}

fn default_min_atoms() -> usize {
    30
}

fn default_max_atoms() -> usize {
    200_000
}

/// Among atoms U_i with top height U_i + M_i in the band, correlates the
/// height with F_i(delta) for each probed offset. Each correlation passes
/// when within 3 / sqrt(N - 3) of zero; constant F counts as correlation 0.
///
/// Streams stop once U_i + tau < band.0, with tau the calibrated sup
/// quantile, and atoms with M_i > tau are discarded. The discarded set
/// depends on the path alone, so it cannot couple height and shape.
pub fn mark_independence_probe<G: Gamma + ?Sized>(
    gamma: &G,
    profile: &VarianceProfile,
    grid: &Lattice,
    s: &MarkProbeSettings,
    exec: Execution,
) -> Result<ExperimentReport> {
    grid.validate()?;
    let (lo, hi) = s.band;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return invalid("`band` must be a finite interval with lo < hi");
    }
    if s.offsets.iter().any(|o| o.len() != grid.dim()) {
        return invalid("every offset must match the grid dimension");
    }
    let points = grid.points();
    let model = FieldModel::new(gamma, profile, &points)?;
    let stop = model.calibrate(DEFAULT_PRE_PASS_SIZE, DEFAULT_DELTA, DEFAULT_HARD_CAP, &mut RngStream::new(s.seed, CALIBRATION_STREAM))?;
    let n = points.len();
    // Per stream: whether the atom cap was hit, and (height, F at offsets) per kept atom.
    type Kept = Vec<(f64, Vec<Option<f64>>)>;
    let per_stream: Vec<(bool, Kept)> = map_replicates_with(exec, s.replicates, |rep| {
        let rng = RngStream::new(s.seed, rep);
        let mut ppp = ExtremalPointStream::new(rng.derive(1));
        let mut path_rng = rng;
        let (mut z, mut xi) = (vec![0.0; n], vec![0.0; n]);
        let mut kept = Vec::new();
        loop {
            let u = ppp.next_point();
            if u + stop.tail_quantile < lo {
                return (false, kept);
            }
            if ppp.emitted() > s.max_atoms as u64 {
                return (true, kept);
            }
            model.sample_xi(&mut path_rng, &mut z, &mut xi);
            let m = xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let h = u + m;
            // Keeping only M <= tau makes the selected atoms exactly those of
            // a product region in (height, path), whatever the stop level.
            if h >= lo && h < hi && m <= stop.tail_quantile {
                let top = extract_top(&xi, &points).expect("finite path on a non-empty grid");
                kept.push((h, s.offsets.iter().map(|o| top.value_at(o, 1e-9)).collect()));
            }
        }
    });
    let atoms: Vec<&(f64, Vec<Option<f64>>)> = per_stream.iter().flat_map(|(_, k)| k).collect();
    if atoms.len() < s.min_atoms {
        return Err(Error::InsufficientData {
            needed: s.min_atoms,
            got: atoms.len(),
        });
    }
    let mut report = ExperimentReport {
        experiment: "m3-mark-independence".into(),
        replicates: s.replicates,
        ..Default::default()
    };
    report.metrics.insert("atoms_in_band".into(), atoms.len() as f64);
    // Streams stopped by the atom cap rather than the calibrated level.
    report.metrics.insert("capped_streams".into(), per_stream.iter().filter(|(c, _)| *c).count() as f64);
    report.metrics.insert("tail_quantile".into(), stop.tail_quantile);
    for (k, o) in s.offsets.iter().enumerate() {
        let pairs: Vec<(f64, f64)> = atoms.iter().filter_map(|(h, f)| f[k].map(|v| (*h, v))).collect();
        let label = o.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        if pairs.len() < s.min_atoms {
            return Err(Error::InsufficientData {
                needed: s.min_atoms,
                got: pairs.len(),
            });
        }
        let corr = correlation(&pairs);
        let se = 1.0 / (pairs.len() as f64 - 3.0).sqrt();
        report.checks.push(TestReport {
            name: format!("corr[offset={label}]"),
            statistic: corr,
            p_value: None,
            n: pairs.len(),
            pass: corr.abs() <= 3.0 * se,
            tolerance: 3.0 * se,
        });
    }
    report.finalize();
    Ok(report)
}

/// Pearson correlation; 0 when either coordinate is constant.
fn correlation(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}
