use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};

/// Axis-aligned box `{x : lower <= x <= upper}`, entries may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "box entry {i}: lower {lo} must not exceed upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The whole space `R^dim`.
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: DVector::from_element(dim, f64::NEG_INFINITY),
            upper: DVector::from_element(dim, f64::INFINITY),
        }
    }

    /// The single point `{0}`.
    pub fn origin(dim: usize) -> Self {
        Self {
            lower: DVector::zeros(dim),
            upper: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|v| *v == f64::NEG_INFINITY)
            && self.upper.iter().all(|v| *v == f64::INFINITY)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.violation(x) <= tol
    }

    /// Largest per-entry distance to the box (0 inside).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .map(|(v, (lo, hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Euclidean projection (entrywise clamp).
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
        )
    }
}

// JSON has no infinities, so unbounded sides are written as `null`.
#[derive(Serialize, Deserialize)]
struct BoxSetRepr {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

impl Serialize for BoxSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let finite = |v: &f64| v.is_finite().then_some(*v);
        BoxSetRepr {
            lower: self.lower.iter().map(finite).collect(),
            upper: self.upper.iter().map(finite).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoxSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = BoxSetRepr::deserialize(deserializer)?;
        let lower = repr.lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY));
        let upper = repr.upper.iter().map(|v| v.unwrap_or(f64::INFINITY));
        BoxSet::new(
            DVector::from_iterator(repr.lower.len(), lower),
            DVector::from_iterator(repr.upper.len(), upper),
        )
        .map_err(serde::de::Error::custom)
    }
}
