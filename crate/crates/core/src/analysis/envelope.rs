use serde::{Deserialize, Serialize};
use std::io::Write;

use super::constants::{DetectabilityConstants, RgesConstants, TheoremConstants};
use crate::csvio::{format_float, write_rows};
use crate::error::{Error, Result};

/// Decay rates tried by the envelope fits.
pub fn rate_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (50..100).map(|i| i as f64 / 100.0).collect();
    grid.extend([0.995, 0.999]);
    grid
}

/// Smallest constant used by the fits.
pub const FIT_FLOOR: f64 = 1.0;

// Relative headroom so the fitted inequality survives re-evaluation rounding.
const FIT_HEADROOM: f64 = 1e-12;

/// Generic three-term exponential envelope
/// `initial |gap| rate^t + disturbance sum rate^tau |w(t-tau)| + noise sum rate^tau |v(t-tau)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub initial: f64,
    pub disturbance: f64,
    pub noise: f64,
    pub rate: f64,
}

impl From<&RgesConstants> for Envelope {
    fn from(c: &RgesConstants) -> Self {
        Self { initial: c.c_p, disturbance: c.c_w, noise: c.c_v, rate: c.rho }
    }
}

impl From<&DetectabilityConstants> for Envelope {
    fn from(c: &DetectabilityConstants) -> Self {
        Self { initial: c.c_p, disturbance: c.c_w, noise: c.c_v, rate: c.eta }
    }
}

impl From<&TheoremConstants> for Envelope {
    fn from(c: &TheoremConstants) -> Self {
        Self { initial: c.c1, disturbance: c.c2, noise: c.c3, rate: c.lambda }
    }
}

/// `S(t) = sum_{tau=1}^{t} rate^tau |s(t - tau)|` for `t = 0..len`, by
/// `S(t) = rate (S(t-1) + |s(t-1)|)`.
pub fn discounted_sums(norms: &[f64], len: usize, rate: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut acc = 0.0;
    for t in 0..len {
        if t > 0 {
            acc = rate * (acc + norms[t - 1]);
        }
        out.push(acc);
    }
    out
}

/// One trajectory fed to an envelope check or fit: the error sequence
/// `e(0..=T)`, the initial gap and the norm histories (at least `T` long).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSample {
    pub errors: Vec<f64>,
    pub initial_gap: f64,
    pub w_norms: Vec<f64>,
    pub v_norms: Vec<f64>,
}

impl EnvelopeSample {
    fn validate(&self) -> Result<()> {
        let needed = self.errors.len().saturating_sub(1);
        if self.w_norms.len() < needed || self.v_norms.len() < needed {
            return Err(Error::InvalidParameter(format!(
                "{} errors need {needed} disturbance/noise norms, got {}/{}",
                self.errors.len(),
                self.w_norms.len(),
                self.v_norms.len()
            )));
        }
        let all = self.errors.iter().chain(&self.w_norms).chain(&self.v_norms);
        if all.chain([&self.initial_gap]).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("envelope sample norms must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// The three unscaled envelope terms at every `t`.
    fn terms(&self, rate: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let len = self.errors.len();
        let p = (0..len).map(|t| self.initial_gap * rate.powi(t as i32)).collect();
        (p, discounted_sums(&self.w_norms, len, rate), discounted_sums(&self.v_norms, len, rate))
    }
}

impl Envelope {
    pub fn bounds(&self, sample: &EnvelopeSample) -> Vec<f64> {
        let (p, w, v) = sample.terms(self.rate);
        (0..sample.errors.len())
            .map(|t| self.initial * p[t] + self.disturbance * w[t] + self.noise * v[t])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub t: usize,
    pub error: f64,
    pub bound: f64,
    pub margin: f64,
}

/// Per-t comparison of an error sequence with an exponential envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub envelope: Envelope,
    pub rows: Vec<MarginRow>,
    pub min_margin: f64,
    /// True when the envelope constants came from a data fit rather than a
    /// proof; such a check is a consistency test, not a certificate.
    pub fitted: bool,
}

impl MarginReport {
    pub fn holds(&self) -> bool {
        self.min_margin >= 0.0
    }

    pub fn violations(&self) -> impl Iterator<Item = &MarginRow> {
        self.rows.iter().filter(|r| r.margin < 0.0)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let header: Vec<String> = ["t", "error", "bound", "margin"].iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.t.to_string(), format_float(r.error), format_float(r.bound), format_float(r.margin)])
            .collect();
        write_rows(writer, &header, &rows)
    }
}

/// Margins `bound(t) - error(t)` of an envelope along one trajectory.
pub fn check_envelope(envelope: &Envelope, sample: &EnvelopeSample, fitted: bool) -> Result<MarginReport> {
    sample.validate()?;
    let bounds = envelope.bounds(sample);
    let rows: Vec<MarginRow> = sample
        .errors
        .iter()
        .zip(bounds)
        .enumerate()
        .map(|(t, (&error, bound))| MarginRow { t, error, bound, margin: bound - error })
        .collect();
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(MarginReport { envelope: *envelope, rows, min_margin, fitted })
}

/// Check an estimator error sequence against the theorem envelope.
pub fn check_rges_envelope(
    errors: &[f64],
    w_norms: &[f64],
    v_norms: &[f64],
    constants: &TheoremConstants,
    initial_gap: f64,
) -> Result<MarginReport> {
    let sample = EnvelopeSample {
        errors: errors.to_vec(),
        initial_gap,
        w_norms: w_norms.to_vec(),
        v_norms: v_norms.to_vec(),
    };
    check_envelope(&constants.into(), &sample, false)
}

/// Envelope fit over a rate grid. For each rate the three constants share
/// one value, the pointwise maximum of `e(t) / (P(t) + W(t) + V(t))`
/// (floored at [`FIT_FLOOR`]); the rate with the smallest total envelope
/// area over the data wins.
fn fit_envelope(samples: &[EnvelopeSample]) -> Result<Envelope> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("envelope fit needs at least one trajectory".into()));
    }
    for s in samples {
        s.validate()?;
    }
    let mut best: Option<(f64, Envelope)> = None;
    'rates: for rate in rate_grid() {
        let mut scale = FIT_FLOOR;
        let mut basis_total = 0.0;
        for s in samples {
            let (p, w, v) = s.terms(rate);
            for (t, &e) in s.errors.iter().enumerate() {
                let basis = p[t] + w[t] + v[t];
                basis_total += basis;
                if e > 0.0 {
                    if basis <= 0.0 {
                        continue 'rates;
                    }
                    scale = scale.max(e / basis);
                }
            }
        }
        let scale = scale * (1.0 + FIT_HEADROOM);
        let area = scale * basis_total;
        if !area.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            best = Some((area, Envelope { initial: scale, disturbance: scale, noise: scale, rate }));
        }
    }
    best.map(|(_, env)| env).ok_or(Error::EnvelopeUnfittable)
}

/// Fitted estimator stability constants (not certified).
pub fn fit_observer_envelope(samples: &[EnvelopeSample]) -> Result<RgesConstants> {
    let env = fit_envelope(samples)?;
    RgesConstants::new(env.initial, env.disturbance, env.noise, env.rate)
}

/// Fitted detectability constants (not certified). Each sample compares two
/// trajectories: errors are state differences, `w_norms` disturbance
/// differences and `v_norms` output differences.
pub fn fit_detectability_envelope(samples: &[EnvelopeSample]) -> Result<DetectabilityConstants> {
    let env = fit_envelope(samples)?;
    DetectabilityConstants::new(env.initial, env.disturbance, env.noise, env.rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(errors: Vec<f64>, gap: f64) -> EnvelopeSample {
        let n = errors.len();
        EnvelopeSample { errors, initial_gap: gap, w_norms: vec![0.0; n], v_norms: vec![0.0; n] }
    }

    #[test]
    fn discounted_sum_matches_direct() {
        let w = [1.0, 2.0, 0.5, 3.0];
        let s = discounted_sums(&w, 5, 0.7);
        for t in 0..5 {
            let direct: f64 = (1..=t).map(|tau| 0.7f64.powi(tau as i32) * w[t - tau]).sum();
            assert!((s[t] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_contents() {
        let g = rate_grid();
        assert_eq!(g.len(), 52);
        assert!(g.contains(&0.9) && g.contains(&0.5) && g.contains(&0.999));
        assert!(g.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn exact_geometric_error_is_recovered() {
        let errors: Vec<f64> = (0..60).map(|t| 2.0 * 0.9f64.powi(t)).collect();
        let c = fit_observer_envelope(&[sample(errors.clone(), 1.0)]).unwrap();
        assert_eq!(c.rho, 0.9);
        assert!((c.c_p - 2.0).abs() < 1e-9);
        let report = check_envelope(&(&c).into(), &sample(errors, 1.0), true).unwrap();
        assert!(report.holds());
    }

    #[test]
    fn zero_error_gives_floor_constants() {
        let c = fit_observer_envelope(&[sample(vec![0.0; 20], 0.0)]).unwrap();
        assert!((c.c_p - FIT_FLOOR).abs() < 1e-9);
        assert!((c.c_w - FIT_FLOOR).abs() < 1e-9);
    }

    #[test]
    fn unexplained_error_is_unfittable() {
        let s = sample(vec![0.0, 1.0, 0.5], 0.0);
        assert!(matches!(fit_observer_envelope(&[s]), Err(Error::EnvelopeUnfittable)));
        assert!(fit_observer_envelope(&[]).is_err());
    }

    #[test]
    fn fit_holds_on_noisy_training_data() {
        let w = vec![0.3, 0.0, 0.1, 0.5, 0.2, 0.0, 0.4, 0.1];
        let v = vec![0.1; 8];
        let errors = vec![1.0, 0.8, 0.9, 0.4, 0.7, 0.6, 0.2, 0.5, 0.3];
        let s = EnvelopeSample { errors, initial_gap: 1.2, w_norms: w, v_norms: v };
        let c = fit_observer_envelope(std::slice::from_ref(&s)).unwrap();
        assert!(check_envelope(&(&c).into(), &s, true).unwrap().holds());
    }

    #[test]
    fn margin_report_flags_violation() {
        let tc = TheoremConstants {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            lambda: 0.5,
            primed: [1.0; 3],
            double_primed: [1.0; 3],
        };
        let r = check_rges_envelope(&[0.0, 0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &tc, 2.0).unwrap();
        assert!(r.holds());
        assert_eq!(r.rows[2].margin, 0.5);
        let r = check_rges_envelope(&[0.0, 0.1], &[0.0], &[0.0], &tc, 0.0).unwrap();
        assert!(!r.holds());
        assert_eq!(r.violations().count(), 1);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,error,bound,margin\n"));
        assert!(check_rges_envelope(&[0.0, 0.1, 0.2], &[0.0], &[0.0], &tc, 0.0).is_err());
    }
}
