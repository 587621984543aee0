//! Exact sampling of Gaussian vectors on finite point sets through a dense
//! Cholesky factor computed once per design.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::variogram::{covariance_matrix, CovarianceFunction, Gamma, Point, VarianceProfile};
use nalgebra::{DMatrix, DVector};

/// Jitter ladder, as multiples of the largest diagonal entry.
pub const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Lower-triangular factor of a covariance matrix.
///
/// Rows whose variance is exactly zero are deterministic: their factor row
/// is zero and they are excluded from the factorization.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    n: usize,
    /// Packed row-major lower triangle.
    packed: Vec<f64>,
    jitter_used: f64,
}

impl CholeskyFactor {
    /// Factors `cov`, escalating through [`JITTER_LADDER`] on failure.
    pub fn factor(cov: &DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        assert_eq!(n, cov.ncols(), "covariance must be square");
        let max_diag = (0..n).map(|i| cov[(i, i)]).fold(0.0f64, f64::max);
        let active: Vec<usize> = (0..n).filter(|&i| cov[(i, i)] != 0.0).collect();

        let mut last_index = 0;
        for (attempt, jitter) in std::iter::once(0.0)
            .chain(JITTER_LADDER.iter().map(|f| f * max_diag))
            .enumerate()
        {
            if attempt > 0 && jitter == 0.0 {
                break;
            }
            match try_cholesky(cov, &active, jitter, max_diag) {
                Ok(packed) => {
                    return Ok(Self {
                        n,
                        packed,
                        jitter_used: jitter,
                    })
                }
                Err(idx) => last_index = idx,
            }
        }
        Err(Error::SingularCovariance {
            index: last_index,
            max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * max_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if j <= i { self.packed[i * (i + 1) / 2 + j] } else { 0.0 })
    }

    /// out = L z
    #[inline]
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let mut k = 0;
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let row = &self.packed[k..k + i + 1];
            *o = row.iter().zip(z).map(|(l, z)| l * z).sum();
            k += i + 1;
        }
    }
}

/// Returns the packed factor of cov + jitter*I restricted to `active`, or
/// the index of the leading minor where the factorization broke down.
fn try_cholesky(cov: &DMatrix<f64>, active: &[usize], jitter: f64, max_diag: f64) -> std::result::Result<Vec<f64>, usize> {
    let n = cov.nrows();
    let mut packed = vec![0.0; n * (n + 1) / 2];
    let at = |i: usize, j: usize| i * (i + 1) / 2 + j;
    let floor = max_diag * f64::EPSILON * n as f64;
    for (ai, &i) in active.iter().enumerate() {
        for (aj, &j) in active[..=ai].iter().enumerate() {
            let mut s = cov[(i, j)];
            for &k in &active[..aj] {
                s -= packed[at(i, k)] * packed[at(j, k)];
            }
            if i == j {
                let pivot = s + jitter;
                if !(pivot > floor) {
                    return Err(i);
                }
                packed[at(i, i)] = pivot.sqrt();
            } else {
                packed[at(i, j)] = s / packed[at(j, j)];
            }
        }
    }
    Ok(packed)
}

/// The finite-dimensional law of a Gaussian process on a set of sites.
#[derive(Clone, Debug)]
pub struct GaussianDesign {
    points: Vec<Point>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: CholeskyFactor,
}

impl GaussianDesign {
    /// A zero-mean design for an arbitrary covariance matrix.
    pub fn from_covariance(points: Vec<Point>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = CholeskyFactor::factor(&cov)?;
        let n = cov.nrows();
        Ok(Self {
            points,
            mean: DVector::zeros(n),
            cov,
            chol,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.cov.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn chol(&self) -> DMatrix<f64> {
        self.chol.to_matrix()
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn jitter_used(&self) -> f64 {
        self.chol.jitter_used()
    }

    /// Writes one draw into `out`, using `z` as scratch (both of length n).
    #[inline]
    pub fn sample_into(&self, rng: &mut RngStream, z: &mut [f64], out: &mut [f64]) {
        rng.fill_normal(z);
        self.chol.apply(z, out);
        for (o, m) in out.iter_mut().zip(self.mean.iter()) {
            *o += m;
        }
    }
}

/// Prepares the design of (W(t_1), ..., W(t_n)) for the given variogram and
/// variance profile. The mean is zero; the drift is applied by callers.
pub fn prepare<G: Gamma + ?Sized>(gamma: &G, profile: &VarianceProfile, points: &[Point]) -> Result<GaussianDesign> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("`points` must be non-empty".into()));
    }
    let (cov, _) = covariance_matrix(gamma, profile, points)?;
    GaussianDesign::from_covariance(points.to_vec(), cov)
}

/// Prepares the design of a unit-variance stationary field with covariance
/// C(t_i - t_j).
pub fn prepare_stationary(cov: &CovarianceFunction, points: &[Point]) -> Result<GaussianDesign> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("`points` must be non-empty".into()));
    }
    GaussianDesign::from_covariance(points.to_vec(), cov.matrix(points)?)
}

pub fn sample_path(design: &GaussianDesign, rng: &mut RngStream) -> Vec<f64> {
    let n = design.len();
    let mut z = vec![0.0; n];
    let mut out = vec![0.0; n];
    design.sample_into(rng, &mut z, &mut out);
    out
}

/// One draw of the stationary field at `points`. Prepare the design once
/// with [`prepare_stationary`] when sampling repeatedly.
pub fn sample_stationary(cov: &CovarianceFunction, points: &[Point], rng: &mut RngStream) -> Result<Vec<f64>> {
    let design = prepare_stationary(cov, points)?;
    Ok(sample_path(&design, rng))
}
