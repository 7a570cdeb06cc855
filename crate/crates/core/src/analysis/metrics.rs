use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rmse {
    pub per_component: Vec<f64>,
    /// `sqrt(mean_t |x(t) - xhat(t)|^2)`.
    pub aggregate: f64,
}

/// Root-mean-square estimation error, ignoring the first `skip` samples.
pub fn rmse(truth: &[DVector<f64>], estimates: &[DVector<f64>], skip: usize) -> Result<Rmse> {
    check_dim("estimate count", truth.len(), estimates.len())?;
    if skip >= truth.len() {
        return Err(Error::InvalidParameter(format!(
            "skip={skip} leaves no samples out of {}",
            truth.len()
        )));
    }
    let n = truth[0].len();
    let mut sums = vec![0.0; n];
    for (x, xhat) in truth.iter().zip(estimates).skip(skip) {
        check_dim("truth state", n, x.len())?;
        check_dim("estimate", n, xhat.len())?;
        for (k, s) in sums.iter_mut().enumerate() {
            *s += (x[k] - xhat[k]).powi(2);
        }
    }
    let count = (truth.len() - skip) as f64;
    let aggregate = (sums.iter().sum::<f64>() / count).sqrt();
    Ok(Rmse {
        per_component: sums.iter().map(|s| (s / count).sqrt()).collect(),
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn identical_and_offset() {
        let truth: Vec<_> = (0..5).map(|k| dvector![k as f64, 1.0]).collect();
        assert_eq!(rmse(&truth, &truth, 0).unwrap().aggregate, 0.0);
        let off: Vec<_> = truth.iter().map(|x| x + dvector![0.3, -0.4]).collect();
        let r = rmse(&truth, &off, 1).unwrap();
        assert!((r.per_component[0] - 0.3).abs() < 1e-12);
        assert!((r.per_component[1] - 0.4).abs() < 1e-12);
        assert!((r.aggregate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths() {
        let a = vec![dvector![1.0]; 3];
        let b = vec![dvector![1.0]; 2];
        assert!(rmse(&a, &b, 0).is_err());
        assert!(rmse(&a, &a, 3).is_err());
    }
}
