use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

/// Two-sided power bounds of the prior weighting and stage cost:
/// `lower_i s^a <= cost_i(s) <= upper_i s^a` for `i` in `{p, w, v}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBounds {
    pub a: f64,
    pub lower_p: f64,
    pub upper_p: f64,
    pub lower_w: f64,
    pub upper_w: f64,
    pub lower_v: f64,
    pub upper_v: f64,
}

/// Quadratic MHE costs
/// `Gamma(chi, xbar) = (chi - xbar)' P (chi - xbar)` and
/// `l(omega, nu) = omega' W omega + nu' V nu`, with `P`, `W`, `V` positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostSpecRepr", into = "CostSpecRepr")]
pub struct CostSpec {
    prior_weight: DMatrix<f64>,
    disturbance_weight: DMatrix<f64>,
    noise_weight: DMatrix<f64>,
    // Upper-triangular square roots, `weight = root' root`.
    prior_root: DMatrix<f64>,
    disturbance_root: DMatrix<f64>,
    noise_root: DMatrix<f64>,
}

fn weight_root(name: &str, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("cost weight (square)", w.nrows(), w.ncols())?;
    check_finite(name, w.as_slice())?;
    let asym = (w - w.transpose()).amax();
    if asym > 1e-12 * w.amax().max(1.0) {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    let chol = w
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter(format!("{name} is not positive definite")))?;
    Ok(chol.l().transpose())
}

fn eigen_range(w: &DMatrix<f64>) -> (f64, f64) {
    let eig = w.clone().symmetric_eigen().eigenvalues;
    (eig.min(), eig.max())
}

impl CostSpec {
    pub fn new(
        prior_weight: DMatrix<f64>,
        disturbance_weight: DMatrix<f64>,
        noise_weight: DMatrix<f64>,
    ) -> Result<Self> {
        check_dim("disturbance weight vs prior weight", prior_weight.nrows(), disturbance_weight.nrows())?;
        Ok(Self {
            prior_root: weight_root("prior weight", &prior_weight)?,
            disturbance_root: weight_root("disturbance weight", &disturbance_weight)?,
            noise_root: weight_root("noise weight", &noise_weight)?,
            prior_weight,
            disturbance_weight,
            noise_weight,
        })
    }

    /// Identity prior weight with stage weights `Q^-1`, `R^-1`.
    pub fn from_covariances(q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        let invert = |m: &DMatrix<f64>, name: &str| {
            m.clone()
                .try_inverse()
                .ok_or_else(|| Error::InvalidParameter(format!("{name} covariance is singular")))
        };
        // Symmetrize to strip rounding from the inversion.
        let w = invert(q, "disturbance")?;
        let v = invert(r, "noise")?;
        Self::new(
            DMatrix::identity(q.nrows(), q.nrows()),
            (&w + w.transpose()) * 0.5,
            (&v + v.transpose()) * 0.5,
        )
    }

    /// The reactor example: `Q = 0.1^2 I2`, `R = 0.2^2`, identity prior weight.
    pub fn batch_reactor() -> Self {
        Self::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 100.0,
            DMatrix::from_element(1, 1, 25.0),
        )
        .expect("reactor weights are positive definite")
    }

    pub fn n(&self) -> usize {
        self.prior_weight.nrows()
    }

    pub fn p(&self) -> usize {
        self.noise_weight.nrows()
    }

    pub fn prior_weight(&self) -> &DMatrix<f64> {
        &self.prior_weight
    }

    pub fn disturbance_weight(&self) -> &DMatrix<f64> {
        &self.disturbance_weight
    }

    pub fn noise_weight(&self) -> &DMatrix<f64> {
        &self.noise_weight
    }

    pub(crate) fn prior_root(&self) -> &DMatrix<f64> {
        &self.prior_root
    }

    pub(crate) fn disturbance_root(&self) -> &DMatrix<f64> {
        &self.disturbance_root
    }

    pub(crate) fn noise_root(&self) -> &DMatrix<f64> {
        &self.noise_root
    }

    pub fn prior_cost(&self, chi: &DVector<f64>, prior: &DVector<f64>) -> f64 {
        (&self.prior_root * (chi - prior)).norm_squared()
    }

    pub fn stage_cost(&self, omega: &DVector<f64>, nu: &DVector<f64>) -> f64 {
        (&self.disturbance_root * omega).norm_squared() + (&self.noise_root * nu).norm_squared()
    }

    /// Power bounds with `a = 2`; the constants are the extreme eigenvalues
    /// of the weights.
    pub fn bounds(&self) -> CostBounds {
        let (lower_p, upper_p) = eigen_range(&self.prior_weight);
        let (lower_w, upper_w) = eigen_range(&self.disturbance_weight);
        let (lower_v, upper_v) = eigen_range(&self.noise_weight);
        CostBounds {
            a: 2.0,
            lower_p,
            upper_p,
            lower_w,
            upper_w,
            lower_v,
            upper_v,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CostSpecRepr {
    #[serde(with = "crate::serde_util::matrix_rows")]
    prior_weight: DMatrix<f64>,
    #[serde(with = "crate::serde_util::matrix_rows")]
    disturbance_weight: DMatrix<f64>,
    #[serde(with = "crate::serde_util::matrix_rows")]
    noise_weight: DMatrix<f64>,
}

impl TryFrom<CostSpecRepr> for CostSpec {
    type Error = Error;

    fn try_from(r: CostSpecRepr) -> Result<Self> {
        CostSpec::new(r.prior_weight, r.disturbance_weight, r.noise_weight)
    }
}

impl From<CostSpec> for CostSpecRepr {
    fn from(c: CostSpec) -> Self {
        Self {
            prior_weight: c.prior_weight,
            disturbance_weight: c.disturbance_weight,
            noise_weight: c.noise_weight,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn reactor_cost_single_stage() {
        let c = CostSpec::batch_reactor();
        let xbar = dvector![1.0, 2.0];
        assert_eq!(c.prior_cost(&xbar, &xbar), 0.0);
        let stage = c.stage_cost(&dvector![0.1, 0.0], &dvector![0.2]);
        assert!((stage - 2.0).abs() < 1e-14);
    }

    #[test]
    fn from_covariances_matches_explicit_weights() {
        let q = DMatrix::identity(2, 2) * 0.01;
        let r = DMatrix::from_element(1, 1, 0.04);
        let c = CostSpec::from_covariances(&q, &r).unwrap();
        let reference = CostSpec::batch_reactor();
        assert!((c.disturbance_weight() - reference.disturbance_weight()).amax() < 1e-10);
        assert!((c.noise_weight() - reference.noise_weight()).amax() < 1e-12);
    }

    #[test]
    fn reactor_bounds_are_eigenvalues() {
        let b = CostSpec::batch_reactor().bounds();
        assert_eq!(b.a, 2.0);
        assert!((b.lower_p - 1.0).abs() < 1e-12 && (b.upper_p - 1.0).abs() < 1e-12);
        assert!((b.lower_w - 100.0).abs() < 1e-10 && (b.upper_w - 100.0).abs() < 1e-10);
        assert!((b.lower_v - 25.0).abs() < 1e-12 && (b.upper_v - 25.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_weight() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(CostSpec::new(bad, DMatrix::identity(2, 2), DMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = CostSpec::batch_reactor();
        let s = serde_json::to_string(&c).unwrap();
        let back: CostSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
