//! Variogram families, conditional negative definiteness checks, and the
//! covariance structures derived from them.

use crate::error::{invalid, Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// A site in R^d.
pub type Point = Vec<f64>;

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Anything that can be evaluated as a variogram on R^d.
///
/// [`Variogram`] is the validated implementation. [`RawVariogram`] wraps an
/// arbitrary closure and carries no guarantees.
pub trait Gamma: Send + Sync {
    fn dim(&self) -> usize;

    /// Evaluates gamma at `t`; `t.len()` must equal `self.dim()`.
    fn gamma(&self, t: &[f64]) -> f64;

    /// Evaluates gamma at `a - b`.
    fn gamma_diff(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.gamma(&diff)
    }
}

/// One atom of a discrete spectral measure on the unit sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralAtom {
    pub direction: Vec<f64>,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum VariogramKind {
    /// gamma = 0 everywhere (complete dependence).
    Zero,
    /// gamma(t) = scale * |t|^alpha.
    Fractional { alpha: f64, scale: f64 },
    /// gamma(t) = sum_i weights[i] * |t_i|^alphas[i].
    Anisotropic { alphas: Vec<f64>, weights: Vec<f64> },
    /// gamma(t) = sum_j mass_j * |<t, dir_j>|^alpha.
    Spectral { alpha: f64, atoms: Vec<SpectralAtom> },
    /// gamma_1 + gamma_2 on the same space.
    Sum(Box<Variogram>, Box<Variogram>),
    /// gamma(t_1, t_2) = gamma_1(t_1) + gamma_2(t_2) on R^{d1 + d2}.
    Product(Box<Variogram>, Box<Variogram>),
}

/// A validated conditionally negative definite function with gamma(0) = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VariogramSpec", into = "VariogramSpec")]
pub struct Variogram {
    kind: VariogramKind,
    dim: usize,
}

fn check_alpha(alpha: f64, field: &str) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return invalid(format!("`{field}` must lie in (0, 2], got {alpha}"));
    }
    Ok(())
}

fn check_positive(x: f64, field: &str) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return invalid(format!("`{field}` must be a positive finite number, got {x}"));
    }
    Ok(())
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return invalid("`dim` must be at least 1");
    }
    Ok(())
}

impl Variogram {
    pub fn zero(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            kind: VariogramKind::Zero,
            dim,
        })
    }

    pub fn fractional(dim: usize, alpha: f64, scale: f64) -> Result<Self> {
        check_dim(dim)?;
        check_alpha(alpha, "alpha")?;
        check_positive(scale, "scale")?;
        Ok(Self {
            kind: VariogramKind::Fractional { alpha, scale },
            dim,
        })
    }

    /// gamma(t) = |t| on R^d: the Brownian variogram.
    pub fn brownian(dim: usize) -> Self {
        Self::fractional(dim, 1.0, 1.0).expect("valid parameters")
    }

    pub fn anisotropic(alphas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if alphas.len() != weights.len() {
            return invalid(format!(
                "`alphas` and `weights` must have equal length, got {} and {}",
                alphas.len(),
                weights.len()
            ));
        }
        check_dim(alphas.len())?;
        for (i, (&a, &c)) in alphas.iter().zip(&weights).enumerate() {
            check_alpha(a, &format!("alphas[{i}]"))?;
            check_positive(c, &format!("weights[{i}]"))?;
        }
        let dim = alphas.len();
        Ok(Self {
            kind: VariogramKind::Anisotropic { alphas, weights },
            dim,
        })
    }

    /// Directions are normalized to unit length.
    pub fn spectral(dim: usize, alpha: f64, atoms: Vec<SpectralAtom>) -> Result<Self> {
        check_dim(dim)?;
        check_alpha(alpha, "alpha")?;
        if atoms.is_empty() {
            return invalid("`atoms` must be non-empty");
        }
        let mut normalized = Vec::with_capacity(atoms.len());
        for (i, atom) in atoms.into_iter().enumerate() {
            if atom.direction.len() != dim {
                return invalid(format!(
                    "`atoms[{i}].direction` has length {}, expected {dim}",
                    atom.direction.len()
                ));
            }
            check_positive(atom.mass, &format!("atoms[{i}].mass"))?;
            let norm = atom.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return invalid(format!("`atoms[{i}].direction` must be a non-zero finite vector"));
            }
            normalized.push(SpectralAtom {
                direction: atom.direction.iter().map(|x| x / norm).collect(),
                mass: atom.mass,
            });
        }
        Ok(Self {
            kind: VariogramKind::Spectral {
                alpha,
                atoms: normalized,
            },
            dim,
        })
    }

    pub fn sum(first: Variogram, second: Variogram) -> Result<Self> {
        if first.dim != second.dim {
            return Err(Error::DimensionMismatch {
                expected: first.dim,
                got: second.dim,
            });
        }
        let dim = first.dim;
        Ok(Self {
            kind: VariogramKind::Sum(Box::new(first), Box::new(second)),
            dim,
        })
    }

    pub fn product(first: Variogram, second: Variogram) -> Self {
        let dim = first.dim + second.dim;
        Self {
            kind: VariogramKind::Product(Box::new(first), Box::new(second)),
            dim,
        }
    }

    pub fn kind(&self) -> &VariogramKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// gamma(t), checking the dimension of `t`.
    pub fn eval(&self, t: &[f64]) -> Result<f64> {
        if t.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: t.len(),
            });
        }
        Ok(self.eval_unchecked(t))
    }

    fn eval_unchecked(&self, t: &[f64]) -> f64 {
        match &self.kind {
            VariogramKind::Zero => 0.0,
            VariogramKind::Fractional { alpha, scale } => {
                let r2: f64 = t.iter().map(|x| x * x).sum();
                if r2 == 0.0 {
                    0.0
                } else if *alpha == 2.0 {
                    scale * r2
                } else {
                    scale * r2.powf(alpha / 2.0)
                }
            }
            VariogramKind::Anisotropic { alphas, weights } => t
                .iter()
                .zip(alphas.iter().zip(weights))
                .map(|(x, (a, c))| c * abs_pow(*x, *a))
                .sum(),
            VariogramKind::Spectral { alpha, atoms } => atoms
                .iter()
                .map(|atom| {
                    let dot: f64 = atom.direction.iter().zip(t).map(|(d, x)| d * x).sum();
                    atom.mass * abs_pow(dot, *alpha)
                })
                .sum(),
            VariogramKind::Sum(a, b) => a.eval_unchecked(t) + b.eval_unchecked(t),
            VariogramKind::Product(a, b) => {
                let (left, right) = t.split_at(a.dim);
                a.eval_unchecked(left) + b.eval_unchecked(right)
            }
        }
    }

    /// The exponent alpha with gamma(lambda t) = lambda^alpha gamma(t), when
    /// one exists.
    pub fn homogeneity_exponent(&self) -> Option<f64> {
        match &self.kind {
            VariogramKind::Zero => None,
            VariogramKind::Fractional { alpha, .. } | VariogramKind::Spectral { alpha, .. } => {
                Some(*alpha)
            }
            VariogramKind::Anisotropic { alphas, .. } => {
                let first = alphas[0];
                alphas.iter().all(|a| *a == first).then_some(first)
            }
            VariogramKind::Sum(a, b) | VariogramKind::Product(a, b) => {
                match (a.homogeneity_exponent(), b.homogeneity_exponent()) {
                    (Some(x), Some(y)) if x == y => Some(x),
                    _ => None,
                }
            }
        }
    }
}

fn abs_pow(x: f64, alpha: f64) -> f64 {
    let ax = x.abs();
    if ax == 0.0 {
        0.0
    } else if alpha == 1.0 {
        ax
    } else if alpha == 2.0 {
        ax * ax
    } else {
        ax.powf(alpha)
    }
}

impl Gamma for Variogram {
    fn dim(&self) -> usize {
        self.dim
    }

    fn gamma(&self, t: &[f64]) -> f64 {
        debug_assert_eq!(t.len(), self.dim);
        self.eval_unchecked(t)
    }
}

/// An arbitrary function used where a variogram is expected, without any
/// validity guarantee. Only constructible through [`RawVariogram::unchecked`].
#[derive(Clone)]
pub struct RawVariogram {
    dim: usize,
    f: ScalarFn,
}

impl RawVariogram {
    pub fn unchecked(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for RawVariogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RawVariogram").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl Gamma for RawVariogram {
    fn dim(&self) -> usize {
        self.dim
    }

    fn gamma(&self, t: &[f64]) -> f64 {
        (self.f)(t)
    }
}

/// How the variance sigma^2(t) of the underlying Gaussian process relates
/// to the variogram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum VarianceProfile {
    /// W(0) = 0, so sigma^2(t) = gamma(t).
    #[default]
    ZeroAtOrigin,
    /// W plus an independent N(0, sigma0_sq) offset: sigma^2(t) = gamma(t) + sigma0_sq.
    Shifted { sigma0_sq: f64 },
}

impl VarianceProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            VarianceProfile::ZeroAtOrigin => Ok(()),
            VarianceProfile::Shifted { sigma0_sq } => {
                if !(*sigma0_sq >= 0.0 && sigma0_sq.is_finite()) {
                    return invalid(format!("`sigma0_sq` must be finite and >= 0, got {sigma0_sq}"));
                }
                Ok(())
            }
        }
    }

    fn offset(&self) -> f64 {
        match self {
            VarianceProfile::ZeroAtOrigin => 0.0,
            VarianceProfile::Shifted { sigma0_sq } => *sigma0_sq,
        }
    }

    pub fn sigma2<G: Gamma + ?Sized>(&self, gamma: &G, t: &[f64]) -> f64 {
        gamma.gamma(t) + self.offset()
    }
}

/// A stationary unit-variance covariance function C(t).
#[derive(Clone)]
pub enum CovarianceFunction {
    /// C(t) = exp(-gamma(t) / beta).
    ExpVariogram { gamma: Variogram, beta: f64 },
    Tabulated {
        dim: usize,
        f: ScalarFn,
    },
}

impl fmt::Debug for CovarianceFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceFunction::ExpVariogram { gamma, beta } => f
                .debug_struct("ExpVariogram")
                .field("gamma", gamma)
                .field("beta", beta)
                .finish(),
            CovarianceFunction::Tabulated { dim, .. } => {
                f.debug_struct("Tabulated").field("dim", dim).finish_non_exhaustive()
            }
        }
    }
}

impl CovarianceFunction {
    pub fn exp_variogram(gamma: Variogram, beta: f64) -> Result<Self> {
        check_positive(beta, "beta")?;
        Ok(CovarianceFunction::ExpVariogram { gamma, beta })
    }

    pub fn tabulated(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CovarianceFunction::Tabulated {
            dim,
            f: Arc::new(f),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceFunction::ExpVariogram { gamma, .. } => gamma.dim(),
            CovarianceFunction::Tabulated { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        match self {
            CovarianceFunction::ExpVariogram { gamma, beta } => (-gamma.gamma(t) / beta).exp(),
            CovarianceFunction::Tabulated { f, .. } => f(t),
        }
    }

    /// 1 - C(t), without cancellation for the exponential family.
    pub fn one_minus(&self, t: &[f64]) -> f64 {
        match self {
            CovarianceFunction::ExpVariogram { gamma, beta } => -(-gamma.gamma(t) / beta).exp_m1(),
            CovarianceFunction::Tabulated { f, .. } => 1.0 - f(t),
        }
    }

    /// Matrix C(t_i - t_j).
    pub fn matrix(&self, points: &[Point]) -> Result<DMatrix<f64>> {
        check_points(self.dim(), points)?;
        let n = points.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
            for j in 0..i {
                let d: Vec<f64> = points[i].iter().zip(&points[j]).map(|(a, b)| a - b).collect();
                let c = self.eval(&d);
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        Ok(m)
    }
}

pub(crate) fn check_points(dim: usize, points: &[Point]) -> Result<()> {
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
    }
    Ok(())
}

/// Outcome of a conditional negative definiteness check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CndReport {
    pub pass: bool,
    /// Largest eigenvalue of P Gamma P (should be <= 0).
    pub max_eigenvalue: f64,
    /// Positive part of `max_eigenvalue`.
    pub max_violation: f64,
}

/// Checks that sum_ij a_i a_j gamma(t_i - t_j) <= 0 whenever sum a_i = 0,
/// by projecting the gamma matrix onto the zero-sum subspace.
pub fn check_cnd<G: Gamma + ?Sized>(gamma: &G, points: &[Point], tol: f64) -> Result<CndReport> {
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: points.len(),
        });
    }
    if !(tol > 0.0) {
        return invalid(format!("`tol` must be positive, got {tol}"));
    }
    check_points(gamma.dim(), points)?;
    let n = points.len();
    let g = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            gamma.gamma_diff(&points[i], &points[j])
        }
    });
    let p = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let mut projected = &p * g * &p;
    projected = (&projected + projected.transpose()) * 0.5;
    let eig = SymmetricEigen::new(projected);
    let max_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CndReport {
        pass: max_eigenvalue <= tol,
        max_eigenvalue,
        max_violation: max_eigenvalue.max(0.0),
    })
}

/// sigma_ij = sigma^2(t_i)/2 + sigma^2(t_j)/2 - gamma(t_i - t_j)/2 and the
/// drifted means mu_i = -sigma^2(t_i)/2.
///
/// The caller is responsible for `gamma` being negative definite on
/// `points`; otherwise the matrix need not be positive semidefinite.
pub fn covariance_matrix<G: Gamma + ?Sized>(
    gamma: &G,
    profile: &VarianceProfile,
    points: &[Point],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_points(gamma.dim(), points)?;
    profile.validate()?;
    let n = points.len();
    let var: Vec<f64> = points.iter().map(|p| profile.sigma2(gamma, p)).collect();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        cov[(i, i)] = var[i];
        for j in 0..i {
            let c = var[i] / 2.0 + var[j] / 2.0 - gamma.gamma_diff(&points[i], &points[j]) / 2.0;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let mean = DVector::from_iterator(n, var.iter().map(|v| -v / 2.0));
    Ok((cov, mean))
}

/// Smallest epsilon accepted by [`regular_variation_probe`].
pub const PROBE_EPS_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub eps: f64,
    pub pair: usize,
    /// `None` when the pair was skipped.
    pub ratio: Option<f64>,
    /// The requested epsilon was below the floor and was raised to it.
    pub floored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    /// Pairs with gamma(t1 - t2) = 0 (skipped).
    pub skipped_pairs: Vec<usize>,
    /// Every non-skipped pair has |ratio - 1| <= tol at the smallest epsilon.
    pub converged: bool,
}

/// Tabulates (1 - C(eps t1 - eps t2)) / (L(eps) eps^alpha gamma(t1 - t2)).
///
/// `slowly_varying` defaults to L = 1.
pub fn regular_variation_probe(
    cov: &CovarianceFunction,
    gamma: &Variogram,
    alpha: f64,
    eps_seq: &[f64],
    pairs: &[(Point, Point)],
    tol: f64,
    slowly_varying: Option<&dyn Fn(f64) -> f64>,
) -> Result<ProbeReport> {
    check_alpha(alpha, "alpha")?;
    if eps_seq.is_empty() {
        return invalid("`eps_seq` must be non-empty");
    }
    if eps_seq.windows(2).any(|w| w[1] >= w[0]) || eps_seq.iter().any(|e| !(*e > 0.0)) {
        return invalid("`eps_seq` must be positive and strictly decreasing");
    }
    if cov.dim() != gamma.dim() {
        return Err(Error::DimensionMismatch {
            expected: gamma.dim(),
            got: cov.dim(),
        });
    }
    let mut rows = Vec::new();
    let mut skipped_pairs = Vec::new();
    let mut converged = true;
    for (k, (t1, t2)) in pairs.iter().enumerate() {
        check_points(gamma.dim(), &[t1.clone(), t2.clone()])?;
        let diff: Vec<f64> = t1.iter().zip(t2).map(|(a, b)| a - b).collect();
        let g = gamma.gamma(&diff);
        if g == 0.0 {
            skipped_pairs.push(k);
            for &eps in eps_seq {
                rows.push(ProbeRow {
                    eps,
                    pair: k,
                    ratio: None,
                    floored: eps < PROBE_EPS_FLOOR,
                });
            }
            continue;
        }
        let mut last = f64::NAN;
        for &requested in eps_seq {
            let eps = requested.max(PROBE_EPS_FLOOR);
            let scaled: Vec<f64> = diff.iter().map(|d| eps * d).collect();
            let l = slowly_varying.map_or(1.0, |f| f(eps));
            let ratio = cov.one_minus(&scaled) / (l * eps.powf(alpha) * g);
            last = ratio;
            rows.push(ProbeRow {
                eps,
                pair: k,
                ratio: Some(ratio),
                floored: requested < PROBE_EPS_FLOOR,
            });
        }
        if !((last - 1.0).abs() <= tol) {
            converged = false;
        }
    }
    Ok(ProbeReport {
        rows,
        skipped_pairs,
        converged,
    })
}

/// JSON form of a [`Variogram`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum VariogramSpec {
    Zero {
        dim: usize,
    },
    Fractional {
        dim: usize,
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Anisotropic {
        dim: usize,
        alphas: Vec<f64>,
        weights: Vec<f64>,
    },
    Spectral {
        dim: usize,
        alpha: f64,
        atoms: Vec<SpectralAtom>,
    },
    Sum {
        dim: usize,
        components: Vec<VariogramSpec>,
    },
    Product {
        dim: usize,
        components: Vec<VariogramSpec>,
    },
}

fn one() -> f64 {
    1.0
}

fn with_context(e: Error, ctx: &str) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{ctx}: {m}")),
        Error::DimensionMismatch { expected, got } => Error::InvalidArgument(format!(
            "{ctx}: dimension mismatch (expected {expected}, got {got})"
        )),
        other => other,
    }
}

fn two_components(components: Vec<VariogramSpec>) -> Result<(Variogram, Variogram)> {
    if components.len() != 2 {
        return invalid(format!("`components` must hold exactly 2 variograms, got {}", components.len()));
    }
    let mut it = components.into_iter();
    let a = Variogram::try_from(it.next().unwrap()).map_err(|e| with_context(e, "components[0]"))?;
    let b = Variogram::try_from(it.next().unwrap()).map_err(|e| with_context(e, "components[1]"))?;
    Ok((a, b))
}

fn expect_dim(declared: usize, actual: usize) -> Result<()> {
    if declared != actual {
        return invalid(format!("`dim` is {declared} but the parameters describe dimension {actual}"));
    }
    Ok(())
}

impl TryFrom<VariogramSpec> for Variogram {
    type Error = Error;

    fn try_from(spec: VariogramSpec) -> Result<Self> {
        match spec {
            VariogramSpec::Zero { dim } => Variogram::zero(dim),
            VariogramSpec::Fractional { dim, alpha, scale } => Variogram::fractional(dim, alpha, scale),
            VariogramSpec::Anisotropic { dim, alphas, weights } => {
                let v = Variogram::anisotropic(alphas, weights)?;
                expect_dim(dim, v.dim)?;
                Ok(v)
            }
            VariogramSpec::Spectral { dim, alpha, atoms } => Variogram::spectral(dim, alpha, atoms),
            VariogramSpec::Sum { dim, components } => {
                let (a, b) = two_components(components)?;
                let v = Variogram::sum(a, b).map_err(|e| with_context(e, "components"))?;
                expect_dim(dim, v.dim)?;
                Ok(v)
            }
            VariogramSpec::Product { dim, components } => {
                let (a, b) = two_components(components)?;
                let v = Variogram::product(a, b);
                expect_dim(dim, v.dim)?;
                Ok(v)
            }
        }
    }
}

impl From<Variogram> for VariogramSpec {
    fn from(v: Variogram) -> Self {
        let dim = v.dim;
        match v.kind {
            VariogramKind::Zero => VariogramSpec::Zero { dim },
            VariogramKind::Fractional { alpha, scale } => VariogramSpec::Fractional { dim, alpha, scale },
            VariogramKind::Anisotropic { alphas, weights } => {
                VariogramSpec::Anisotropic { dim, alphas, weights }
            }
            VariogramKind::Spectral { alpha, atoms } => VariogramSpec::Spectral { dim, alpha, atoms },
            VariogramKind::Sum(a, b) => VariogramSpec::Sum {
                dim,
                components: vec![(*a).into(), (*b).into()],
            },
            VariogramKind::Product(a, b) => VariogramSpec::Product {
                dim,
                components: vec![(*a).into(), (*b).into()],
            },
        }
    }
}
