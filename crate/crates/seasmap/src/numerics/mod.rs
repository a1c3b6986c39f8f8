//! Special functions, circular statistics, and derivative-free optimization.

mod bessel;
mod circular;
mod optim;

pub use bessel::{bessel_i0, bessel_k1};
pub use circular::{
    angle_to_month, circular_deviation, circular_median, month_angle, Angle, MONTHS_PER_RADIAN,
};
pub use optim::{Minimum, NelderMead};
