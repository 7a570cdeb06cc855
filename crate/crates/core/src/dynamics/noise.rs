use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::sets::BoxSet;
use crate::error::{check_dim, Error, Result};

/// Gaussian process/measurement noise `w ~ N(0, Q)`, `v ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(with = "crate::serde_util::matrix_rows")]
    pub covariance_w: DMatrix<f64>,
    #[serde(with = "crate::serde_util::matrix_rows")]
    pub covariance_v: DMatrix<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    /// `Q = 0.1^2 I2`, `R = 0.2^2`.
    pub fn batch_reactor(seed: u64) -> Self {
        Self {
            covariance_w: DMatrix::identity(2, 2) * 0.01,
            covariance_v: DMatrix::from_element(1, 1, 0.04),
            seed,
        }
    }

    pub fn zero(n: usize, p: usize) -> Self {
        Self {
            covariance_w: DMatrix::zeros(n, n),
            covariance_v: DMatrix::zeros(p, p),
            seed: 0,
        }
    }
}

/// Factor `S` with `S S^T = cov`. Cholesky when possible, otherwise the
/// symmetric square root of the eigen-decomposition (covers singular PSD).
pub(crate) fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("covariance (square)", cov.nrows(), cov.ncols())?;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance".into()));
    }
    let scale = cov.amax().max(1.0);
    let asym = (cov - cov.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::InvalidParameter(format!("covariance is not symmetric (asymmetry {asym:e})")));
    }
    if cov.nrows() == 0 {
        return Ok(cov.clone());
    }
    let eig = cov.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -1e-12 * scale {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.l());
    }
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose())
}

/// Disturbance and measurement noise sequences `(w, v)`.
pub type NoiseSequences = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Draw `steps` disturbance and noise samples. The same seed always yields
/// the same sequences (ChaCha8 stream, `w[k]` drawn before `v[k]`).
pub fn draw_noise(spec: &NoiseSpec, steps: usize) -> Result<NoiseSequences> {
    let sw = covariance_factor(&spec.covariance_w)?;
    let sv = covariance_factor(&spec.covariance_v)?;
    let n = sw.nrows();
    let p = sv.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ws = Vec::with_capacity(steps);
    let mut vs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let xi = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        ws.push(&sw * xi);
        let xi = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        vs.push(&sv * xi);
    }
    Ok((ws, vs))
}

/// Project every sample onto `set`, returning the indices that moved.
pub fn project_onto(samples: &mut [DVector<f64>], set: &BoxSet, label: &str) -> Vec<usize> {
    if set.is_unbounded() {
        return Vec::new();
    }
    let mut moved = Vec::new();
    for (k, s) in samples.iter_mut().enumerate() {
        if !set.contains(s, 0.0) {
            *s = set.project(s);
            moved.push(k);
        }
    }
    if !moved.is_empty() {
        warn!("{} {label} samples projected onto their constraint set", moved.len());
    }
    moved
}
