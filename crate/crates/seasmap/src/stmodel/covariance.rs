//! Spatial, temporal, and joint covariance construction.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::bessel_k1;

use super::Hyperparameters;

const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance in kilometers between two (lon, lat) points in
/// degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let s = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * s.sqrt().min(1.0).asin()
}

/// Matern covariance with smoothness fixed at nu = 1:
/// cov(h) = sigma_f2 * kappa h * K1(kappa h), with the analytic limit
/// sigma_f2 at h = 0.
pub fn matern_cov(h: f64, sigma_f2: f64, kappa: f64) -> f64 {
    debug_assert!(h >= 0.0);
    if h == 0.0 {
        return sigma_f2;
    }
    let x = kappa * h;
    // K1 underflows to zero well before x reaches the f64 exp limit.
    if x > 700.0 {
        return 0.0;
    }
    sigma_f2 * x * bessel_k1(x).expect("kappa * h > 0")
}

/// Cross-month covariance of the AR(1) field with unit innovation variance.
///
/// The literal construction starts the recursion fresh at month 1
/// (phi_1 = xi_1), so the marginal variance grows toward month 12:
/// A(i, i') = a^|i - i'| * sum_{k=0}^{min(i,i')-1} a^{2k}.
/// The stationary variant uses a^|i - i'| / (1 - a^2) instead.
pub fn temporal_cov(month_i: usize, month_j: usize, a: f64, stationary: bool) -> f64 {
    debug_assert!((1..=12).contains(&month_i) && (1..=12).contains(&month_j));
    let lag = month_i.abs_diff(month_j) as i32;
    if stationary {
        return a.powi(lag) / (1.0 - a * a);
    }
    let lower = month_i.min(month_j);
    let a2 = a * a;
    // sum_{k=0}^{lower-1} a^{2k}
    let geo = if a2 == 0.0 {
        1.0
    } else {
        (1.0 - a2.powi(lower as i32)) / (1.0 - a2)
    };
    a.powi(lag) * geo
}

/// The 12 x 12 cross-month covariance matrix A.
pub fn temporal_matrix(a: f64, stationary: bool) -> Array2<f64> {
    Array2::from_shape_fn((12, 12), |(i, j)| temporal_cov(i + 1, j + 1, a, stationary))
}

/// The spatial Matern matrix M over locations, scaled by sigma_f2.
/// Duplicate locations make the matrix singular and are rejected.
pub fn spatial_matrix(
    locations: &[(f64, f64)],
    sigma_f2: f64,
    kappa: f64,
) -> Result<Array2<f64>> {
    let n = locations.len();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = sigma_f2;
        for j in (i + 1)..n {
            let h = haversine_km(locations[i], locations[j]);
            if h == 0.0 {
                return Err(Error::Numerical(format!(
                    "duplicate locations {:?} at indices {i} and {j} make the spatial \
                     covariance singular",
                    locations[i]
                )));
            }
            let c = matern_cov(h, sigma_f2, kappa);
            m[[i, j]] = c;
            m[[j, i]] = c;
        }
    }
    Ok(m)
}

/// Joint covariance of the latent field phi over all 12 x n month-major
/// nodes: the Kronecker product A (x) M.
pub fn build_joint_covariance(
    locations: &[(f64, f64)],
    hyper: &Hyperparameters,
    stationary: bool,
) -> Result<Array2<f64>> {
    let n = locations.len();
    let a_mat = temporal_matrix(hyper.a, stationary);
    let m_mat = spatial_matrix(locations, hyper.sigma_f2, hyper.kappa)?;
    let mut joint = Array2::zeros((12 * n, 12 * n));
    for bi in 0..12 {
        for bj in 0..12 {
            let w = a_mat[[bi, bj]];
            let mut block = joint.slice_mut(ndarray::s![
                bi * n..(bi + 1) * n,
                bj * n..(bj + 1) * n
            ]);
            block.assign(&m_mat);
            block *= w;
        }
    }
    Ok(joint)
}
