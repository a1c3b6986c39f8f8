//! Monthly proportion curves.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Offset added to proportions before taking logs, so that zero months
/// stay finite on the log scale.
pub const PROPORTION_OFFSET: f64 = 1e-5;

/// Tolerance on the sum-to-one invariant.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A 12-vector of nonnegative monthly proportions summing to one.
///
/// Month indices are 1-based (1 = January) throughout the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionCurve {
    p: [f64; 12],
}

impl ProportionCurve {
    pub fn new(p: [f64; 12]) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(
                "proportion curve entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "proportion curve sums to {sum}, expected 1"
            )));
        }
        Ok(Self { p })
    }

    pub fn uniform() -> Self {
        Self { p: [1.0 / 12.0; 12] }
    }

    /// Normalizes arbitrary nonnegative monthly weights. An all-zero input
    /// yields the uniform curve.
    pub fn from_weights(w: &[f64; 12]) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(
                "monthly weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = w.iter().sum();
        if sum <= 0.0 {
            return Ok(Self::uniform());
        }
        let mut p = [0.0; 12];
        for (out, v) in p.iter_mut().zip(w) {
            *out = v / sum;
        }
        Ok(Self { p })
    }

    /// Proportion for a 1-based month.
    pub fn get(&self, month: usize) -> f64 {
        assert!((1..=12).contains(&month), "month out of range: {month}");
        self.p[month - 1]
    }

    pub fn as_slice(&self) -> &[f64; 12] {
        &self.p
    }

    /// Adds `offset` to every entry and renormalizes. All entries of the
    /// result are strictly positive.
    pub fn offset_rescaled(&self, offset: f64) -> Self {
        let mut p = self.p;
        for v in &mut p {
            *v += offset;
        }
        let sum: f64 = p.iter().sum();
        for v in &mut p {
            *v /= sum;
        }
        Self { p }
    }

    /// Cyclic shift by `k` months: month m of the result is month m - k of self.
    pub fn rotated(&self, k: usize) -> Self {
        let mut p = [0.0; 12];
        for m in 0..12 {
            p[(m + k) % 12] = self.p[m];
        }
        Self { p }
    }

    pub fn is_uniform(&self, tol: f64) -> bool {
        self.p.iter().all(|v| (v - 1.0 / 12.0).abs() <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_sum() {
        let mut p = [1.0 / 12.0; 12];
        p[0] += 1e-3;
        assert!(ProportionCurve::new(p).is_err());
    }

    #[test]
    fn from_weights_all_zero_is_uniform() {
        let c = ProportionCurve::from_weights(&[0.0; 12]).unwrap();
        assert_eq!(c, ProportionCurve::uniform());
    }

    #[test]
    fn offset_rescale_point_mass() {
        let mut w = [0.0; 12];
        w[0] = 1.0;
        let c = ProportionCurve::from_weights(&w).unwrap().offset_rescaled(PROPORTION_OFFSET);
        // (1 + 1e-5) / (1 + 12e-5) for month 1, 1e-5 / (1 + 12e-5) elsewhere.
        let denom = 1.0 + 12.0e-5;
        assert!((c.get(1) - (1.0 + 1e-5) / denom).abs() < 1e-15);
        for m in 2..=12 {
            assert!((c.get(m) - 1e-5 / denom).abs() < 1e-18);
        }
        let sum: f64 = c.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn offset_rescale_uniform_fixed_point() {
        let c = ProportionCurve::uniform().offset_rescaled(PROPORTION_OFFSET);
        for m in 1..=12 {
            assert!((c.get(m) - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rotation_roundtrip() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let c = ProportionCurve::from_weights(&w).unwrap();
        assert_eq!(c.rotated(5).rotated(7), c);
        assert!((c.rotated(3).get(4) - c.get(1)).abs() < 1e-15);
    }
}
