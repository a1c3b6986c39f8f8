//! Nelder-Mead simplex minimization.
//!
//! The single derivative-free optimizer used for hyperparameter estimation
//! and von Mises least squares. Deterministic given its inputs.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NelderMead {
    /// Simplex diameter below which the simplex counts as collapsed.
    pub step_tol: f64,
    /// Vertex value spread below which the values count as flat. Both this
    /// and `step_tol` must hold to converge: a wide simplex can straddle an
    /// optimum with near-equal values.
    pub value_tol: f64,
    pub max_iter: usize,
    /// Initial simplex displacement per coordinate.
    pub init_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            step_tol: 1e-6,
            value_tol: 1e-9,
            max_iter: 400,
            init_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn minimize<F>(&self, objective: F, start: &[f64]) -> Result<Minimum>
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = start.len();
        assert!(n > 0, "empty start point");
        let f0 = objective(start);
        if !f0.is_finite() {
            return Err(Error::Numerical(format!(
                "objective non-finite at start point {start:?}"
            )));
        }
        if self.max_iter == 0 {
            return Ok(Minimum {
                point: start.to_vec(),
                value: f0,
                iterations: 0,
                converged: false,
            });
        }

        // Non-finite values away from the start are treated as +inf so the
        // simplex backs away from them.
        let eval = |x: &[f64]| {
            let v = objective(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((start.to_vec(), f0));
        for i in 0..n {
            let mut x = start.to_vec();
            let h = if x[i].abs() > 1.0 {
                self.init_step * x[i].abs()
            } else {
                self.init_step
            };
            x[i] += h;
            let v = eval(&x);
            simplex.push((x, v));
        }

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut iterations = 0;
        let mut converged = false;

        while iterations < self.max_iter {
            iterations += 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));

            let spread = simplex[n].1 - simplex[0].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| {
                    x.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max)
                })
                .fold(0.0f64, f64::max);
            if diameter < self.step_tol && spread.abs() < self.value_tol {
                converged = true;
                break;
            }

            // Centroid of all but the worst vertex.
            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }

            let worst = simplex[n].clone();
            let reflect: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + alpha * (c - w))
                .collect();
            let fr = eval(&reflect);

            if fr < simplex[0].1 {
                let expand: Vec<f64> = centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + gamma * (c - w))
                    .collect();
                let fe = eval(&expand);
                simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (reflect, fr);
            } else {
                let contract: Vec<f64> = if fr < worst.1 {
                    centroid
                        .iter()
                        .zip(&reflect)
                        .map(|(c, r)| c + rho * (r - c))
                        .collect()
                } else {
                    centroid
                        .iter()
                        .zip(&worst.0)
                        .map(|(c, w)| c + rho * (w - c))
                        .collect()
                };
                let fc = eval(&contract);
                if fc < worst.1.min(fr) {
                    simplex[n] = (contract, fc);
                } else {
                    // Shrink toward the best vertex.
                    let best = simplex[0].0.clone();
                    for (x, v) in simplex.iter_mut().skip(1) {
                        for (xi, bi) in x.iter_mut().zip(&best) {
                            *xi = bi + sigma * (*xi - bi);
                        }
                        *v = eval(x);
                    }
                }
            }
        }

        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (point, value) = simplex.swap_remove(0);
        // The start vertex is in the simplex and only ever replaced by
        // something better, so value <= f0 holds by construction.
        Ok(Minimum {
            point,
            value,
            iterations,
            converged,
        })
    }
}
