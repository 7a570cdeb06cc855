use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mhe::CostBounds;

/// Exponential stability constants of an estimator:
/// `|x(t) - z(t)| <= C_p |x0 - z0| rho^t + C_w sum rho^tau |w(t-tau)| + C_v sum rho^tau |v(t-tau)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgesConstants {
    pub c_p: f64,
    pub c_w: f64,
    pub c_v: f64,
    pub rho: f64,
}

impl RgesConstants {
    pub fn new(c_p: f64, c_w: f64, c_v: f64, rho: f64) -> Result<Self> {
        let c = Self { c_p, c_w, c_v, rho };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        positive("C_p", self.c_p)?;
        positive("C_w", self.c_w)?;
        positive("C_v", self.c_v)?;
        unit_interval("rho", self.rho)
    }
}

/// Exponential detectability constants:
/// `|x1(t) - x2(t)| <= c_p |x1 - x2| eta^t + c_w sum eta^tau |dw| + c_v sum eta^tau |dh|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityConstants {
    pub c_p: f64,
    pub c_w: f64,
    pub c_v: f64,
    pub eta: f64,
}

impl DetectabilityConstants {
    pub fn new(c_p: f64, c_w: f64, c_v: f64, eta: f64) -> Result<Self> {
        let c = Self { c_p, c_w, c_v, eta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        positive("c_p", self.c_p)?;
        positive("c_w", self.c_w)?;
        positive("c_v", self.c_v)?;
        unit_interval("eta", self.eta)
    }
}

/// Cost-bound inputs: the power bounds of the costs, the output Lipschitz
/// constant and the observer gain bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBoundConstants {
    pub a: f64,
    pub lower_p: f64,
    pub lower_w: f64,
    pub lower_v: f64,
    pub upper_w: f64,
    pub upper_v: f64,
    pub lipschitz_h: f64,
    pub kappa: f64,
}

impl CostBoundConstants {
    pub fn from_bounds(bounds: &CostBounds, lipschitz_h: f64, kappa: f64) -> Result<Self> {
        let c = Self {
            a: bounds.a,
            lower_p: bounds.lower_p,
            lower_w: bounds.lower_w,
            lower_v: bounds.lower_v,
            upper_w: bounds.upper_w,
            upper_v: bounds.upper_v,
            lipschitz_h,
            kappa,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        positive("a", self.a)?;
        positive("lower_p", self.lower_p)?;
        positive("lower_w", self.lower_w)?;
        positive("lower_v", self.lower_v)?;
        positive("upper_w", self.upper_w)?;
        positive("upper_v", self.upper_v)?;
        positive("L_h", self.lipschitz_h)?;
        positive("kappa", self.kappa)
    }

    /// `c_bar = (3 L_bar)^a (upper_w kappa^a + upper_v)` with
    /// `L_bar = max(L_h, 1 / C_v)`.
    pub fn c_bar(&self, rc: &RgesConstants) -> f64 {
        let l_bar = self.lipschitz_h.max(1.0 / rc.c_v);
        (3.0 * l_bar).powf(self.a) * (self.upper_w * self.kappa.powf(self.a) + self.upper_v)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn check_factor_args(rho: f64, a: f64, horizon: usize) -> Result<()> {
    unit_interval("rho", rho)?;
    positive("a", a)?;
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    Ok(())
}

/// `(rho^(-aN) - 1) / (1 - rho^a)`.
pub fn rho_bar_1(rho: f64, a: f64, horizon: usize) -> Result<f64> {
    check_factor_args(rho, a, horizon)?;
    let ra = rho.powf(a);
    Ok((rho.powf(-a * horizon as f64) - 1.0) / (1.0 - ra))
}

/// `(rho^(-a(N-1)) - rho^a) / (1 - rho^a)`.
pub fn rho_bar_2(rho: f64, a: f64, horizon: usize) -> Result<f64> {
    check_factor_args(rho, a, horizon)?;
    let ra = rho.powf(a);
    Ok((rho.powf(-a * (horizon as f64 - 1.0)) - ra) / (1.0 - ra))
}

/// `sum_{tau=1}^{t} rate^(tau - 1) |s(t - tau)|`.
fn shifted_discounted_sum(norms: &[f64], t: usize, rate: f64) -> f64 {
    (1..=t).map(|tau| rate.powi(tau as i32 - 1) * norms[t - tau]).sum()
}

/// Upper bound on the suboptimal window cost at time `t`, given the
/// initial gap `|x0 - xbar0|` and the disturbance/noise norm histories.
pub fn lemma1_bound(
    cbc: &CostBoundConstants,
    rc: &RgesConstants,
    horizon: usize,
    t: usize,
    initial_gap: f64,
    w_norms: &[f64],
    v_norms: &[f64],
) -> Result<f64> {
    cbc.validate()?;
    rc.validate()?;
    if w_norms.len() < t || v_norms.len() < t {
        return Err(Error::InvalidParameter(format!(
            "bound at t={t} needs {t} disturbance/noise norms, got {}/{}",
            w_norms.len(),
            v_norms.len()
        )));
    }
    let a = cbc.a;
    let rho = rc.rho;
    let r1 = rho_bar_1(rho, a, horizon)?;
    let r2 = rho_bar_2(rho, a, horizon)?;
    let c_bar = cbc.c_bar(rc);
    let sw = shifted_discounted_sum(w_norms, t, rho);
    let sv = shifted_discounted_sum(v_norms, t, rho);
    Ok(c_bar
        * (rc.c_p.powf(a) * r1 * initial_gap.powf(a) * rho.powf(a * t as f64)
            + rc.c_w.powf(a) * r2 * sw.powf(a)
            + rc.c_v.powf(a) * r2 * sv.powf(a)))
}

/// Error-envelope constants of the suboptimal estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub lambda: f64,
    /// Constants valid once the horizon is full.
    pub primed: [f64; 3],
    /// Constants valid while the horizon is still filling.
    pub double_primed: [f64; 3],
}

pub fn theorem1_constants(
    dc: &DetectabilityConstants,
    rc: &RgesConstants,
    cbc: &CostBoundConstants,
    horizon: usize,
) -> Result<TheoremConstants> {
    dc.validate()?;
    rc.validate()?;
    cbc.validate()?;
    let r1 = rho_bar_1(rc.rho, cbc.a, horizon)?;
    let r2 = rho_bar_2(rc.rho, cbc.a, horizon)?;
    Ok(theorem1_constants_from_factors(dc, rc, cbc, horizon, r1, r2))
}

/// [`theorem1_constants`] with the geometric factors supplied directly.
pub fn theorem1_constants_from_factors(
    dc: &DetectabilityConstants,
    rc: &RgesConstants,
    cbc: &CostBoundConstants,
    horizon: usize,
    rho_bar_1: f64,
    rho_bar_2: f64,
) -> TheoremConstants {
    let a = cbc.a;
    let inv_a = 1.0 / a;
    let eta = dc.eta;
    let eta_n = eta.powi(horizon as i32);
    let eta_bar = eta / (1.0 - eta);
    let lambda = eta.max(rc.rho);
    let c_bar = cbc.c_bar(rc);

    let cb_p = rc.c_p * (3.0 * c_bar * rho_bar_1).powf(inv_a);
    let cb_w = rc.c_w / rc.rho * (3.0 * c_bar * rho_bar_2).powf(inv_a);
    let cb_v = rc.c_v / rc.rho * (3.0 * c_bar * rho_bar_2).powf(inv_a);

    let lp = cbc.lower_p.powf(-inv_a);
    let lw = cbc.lower_w.powf(-inv_a);
    let lv = cbc.lower_v.powf(-inv_a);
    let tail = dc.c_w * eta_bar * lw + dc.c_v * eta_bar * lv;
    let k_full = dc.c_p * eta_n * lp + tail;
    let k_partial = dc.c_p * lp + tail;
    let obs = dc.c_p * (eta / lambda).powi(horizon as i32);

    let primed = [
        k_full * cb_p + obs * rc.c_p,
        k_full * cb_w + obs * rc.c_w + dc.c_w,
        k_full * cb_v + obs * rc.c_v + dc.c_v,
    ];
    let double_primed = [
        dc.c_p + k_partial * cb_p,
        dc.c_w + k_partial * cb_w,
        dc.c_v + k_partial * cb_v,
    ];
    TheoremConstants {
        c1: primed[0].max(double_primed[0]),
        c2: primed[1].max(double_primed[1]),
        c3: primed[2].max(double_primed[2]),
        lambda,
        primed,
        double_primed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cbc() -> CostBoundConstants {
        CostBoundConstants {
            a: 1.0,
            lower_p: 1.0,
            lower_w: 1.0,
            lower_v: 1.0,
            upper_w: 1.0,
            upper_v: 1.0,
            lipschitz_h: 1.0,
            kappa: 1.0,
        }
    }

    #[test]
    fn factor_spot_values() {
        assert!((rho_bar_1(0.5, 1.0, 2).unwrap() - 6.0).abs() < 1e-14);
        assert!((rho_bar_2(0.5, 1.0, 2).unwrap() - 3.0).abs() < 1e-14);
        assert!((rho_bar_2(0.7, 2.3, 1).unwrap() - 1.0).abs() < 1e-14);
        let r = 0.8f64;
        let a = 1.7;
        assert!((rho_bar_1(r, a, 1).unwrap() - r.powf(-a)).abs() < 1e-12);
    }

    #[test]
    fn factor_argument_checks() {
        assert!(rho_bar_1(1.0, 1.0, 2).is_err());
        assert!(rho_bar_1(0.0, 1.0, 2).is_err());
        assert!(rho_bar_1(0.5, 0.0, 2).is_err());
        assert!(rho_bar_2(0.5, 1.0, 0).is_err());
    }

    #[test]
    fn c_bar_uses_larger_of_lipschitz_and_inverse_cv() {
        let cbc = unit_cbc();
        let rc = RgesConstants::new(1.0, 1.0, 0.25, 0.5).unwrap();
        // L_bar = 4: (12)^1 * (1 + 1)
        assert!((cbc.c_bar(&rc) - 24.0).abs() < 1e-12);
        let rc = RgesConstants::new(1.0, 1.0, 1.0, 0.5).unwrap();
        assert!((cbc.c_bar(&rc) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn cost_bound_cases() {
        let cbc = unit_cbc();
        let rc = RgesConstants::new(1.0, 1.0, 1.0, 0.5).unwrap();
        let c_bar = cbc.c_bar(&rc);
        assert_eq!(lemma1_bound(&cbc, &rc, 3, 4, 0.0, &[0.0; 4], &[0.0; 4]).unwrap(), 0.0);
        let at0 = lemma1_bound(&cbc, &rc, 3, 0, 2.0, &[], &[]).unwrap();
        assert!((at0 - c_bar * rho_bar_1(0.5, 1.0, 3).unwrap() * 2.0).abs() < 1e-12);
        let b = lemma1_bound(&cbc, &rc, 1, 1, 1.0, &[1.0], &[0.0]).unwrap();
        assert!((b - 2.0 * c_bar).abs() < 1e-12);
        assert!(lemma1_bound(&cbc, &rc, 1, 2, 1.0, &[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn lambda_and_positivity() {
        let cbc = unit_cbc();
        let rc = RgesConstants::new(1.0, 1.0, 1.0, 0.5).unwrap();
        let dc = DetectabilityConstants::new(1.0, 1.0, 1.0, 0.5).unwrap();
        let tc = theorem1_constants(&dc, &rc, &cbc, 1).unwrap();
        assert_eq!(tc.lambda, 0.5);
        assert!(tc.c1 > 0.0 && tc.c2 > 0.0 && tc.c3 > 0.0);
        let dc = DetectabilityConstants::new(1.0, 1.0, 1.0, 0.9).unwrap();
        assert_eq!(theorem1_constants(&dc, &rc, &cbc, 4).unwrap().lambda, 0.9);
    }

    #[test]
    fn rejects_out_of_range_constants() {
        assert!(RgesConstants::new(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(RgesConstants::new(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(DetectabilityConstants::new(1.0, -1.0, 1.0, 0.5).is_err());
    }
}
