//! Circular statistics on month angles.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// An angle in radians, stored reduced to [0, 2pi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Self {
        let mut r = radians.rem_euclid(TAU);
        if r >= TAU {
            r = 0.0;
        }
        Angle(r)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Arc distance d(a, b) = pi - |pi - |a - b||, in [0, pi].
    pub fn arc_distance(self, other: Angle) -> f64 {
        let d = (self.0 - other.0).abs();
        std::f64::consts::PI - (std::f64::consts::PI - d).abs()
    }
}

/// Grid angle for a 1-based month: theta = 2 pi m / 12.
pub fn month_angle(month: usize) -> Angle {
    assert!((1..=12).contains(&month));
    Angle::new(TAU * month as f64 / 12.0)
}

/// Nearest 1-based month to an angle on the 12-point grid; ties go to the
/// earlier month.
pub fn angle_to_month(theta: Angle) -> usize {
    let mut best = 1;
    let mut best_d = f64::INFINITY;
    for m in 1..=12 {
        let d = theta.arc_distance(month_angle(m));
        if d < best_d - 1e-12 {
            best = m;
            best_d = d;
        }
    }
    best
}

/// Sample circular median: the sample angle minimizing the mean arc distance
/// to all other sample angles. Ties are broken by the smallest angle value.
pub fn circular_median(sample: &[Angle]) -> Result<Angle> {
    if sample.is_empty() {
        return Err(Error::Validation("circular median of an empty sample".into()));
    }
    let mut best = sample[0];
    let mut best_cost = f64::INFINITY;
    let mut candidates: Vec<Angle> = sample.to_vec();
    candidates.sort_by(|a, b| a.value().total_cmp(&b.value()));
    for &c in &candidates {
        let cost: f64 = sample.iter().map(|&a| c.arc_distance(a)).sum();
        if cost < best_cost - 1e-12 {
            best = c;
            best_cost = cost;
        }
    }
    Ok(best)
}

/// Mean arc distance of the sample to `center`, in radians.
/// Multiply by 12 / (2 pi) to express in months.
pub fn circular_deviation(sample: &[Angle], center: Angle) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    sample.iter().map(|&a| center.arc_distance(a)).sum::<f64>() / sample.len() as f64
}

/// Radians-to-months conversion factor for deviations.
pub const MONTHS_PER_RADIAN: f64 = 12.0 / TAU;

#[cfg(test)]
mod tests {
    use super::*;

    fn a(x: f64) -> Angle {
        Angle::new(x)
    }

    #[test]
    fn angle_reduction() {
        assert!((a(TAU + 0.5).value() - 0.5).abs() < 1e-12);
        assert!((a(-0.5).value() - (TAU - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn median_constant_sample() {
        let s = vec![a(std::f64::consts::FRAC_PI_2); 3];
        let m = circular_median(&s).unwrap();
        assert!((m.value() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn median_wraps_across_zero() {
        let s = vec![a(0.1), a(0.2), a(TAU - 0.1)];
        // Brute force over the sample points: 0.1 has mean distance
        // (0.1 + 0.2)/3, 0.2 has (0.1 + 0.3)/3, 2pi-0.1 has (0.2 + 0.3)/3.
        let m = circular_median(&s).unwrap();
        assert!((m.value() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn median_tie_broken_low() {
        let s = vec![a(0.0), a(std::f64::consts::PI)];
        let m = circular_median(&s).unwrap();
        assert_eq!(m.value(), 0.0);
    }

    #[test]
    fn deviation_basics() {
        assert_eq!(circular_deviation(&[a(1.0); 5], a(1.0)), 0.0);
        let d = circular_deviation(&[a(0.0), a(std::f64::consts::PI)], a(0.0));
        assert!((d - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        // pi/6 radians is exactly one month.
        assert!((std::f64::consts::FRAC_PI_6 * MONTHS_PER_RADIAN - 1.0).abs() < 1e-12);
    }

    #[test]
    fn month_angle_roundtrip() {
        for m in 1..=12 {
            assert_eq!(angle_to_month(month_angle(m)), m);
        }
    }

    #[test]
    fn deviation_rotation_invariant() {
        let s = vec![a(0.3), a(1.1), a(5.9)];
        let c = a(0.4);
        let d0 = circular_deviation(&s, c);
        for k in 1..20 {
            let shift = k as f64 * 0.37;
            let s2: Vec<Angle> = s.iter().map(|x| a(x.value() + shift)).collect();
            let d1 = circular_deviation(&s2, a(c.value() + shift));
            assert!((d0 - d1).abs() < 1e-12);
        }
    }
}
