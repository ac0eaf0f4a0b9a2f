//! Newton ascent with step-halving line search for smooth concave
//! objectives, plus the small dense linear algebra it needs.

use crate::error::{Error, Result};

/// Gradient max-norm below which the optimizer declares convergence.
pub const GRADIENT_TOL: f64 = 1e-8;
/// Relative objective change below which iteration stops.
pub const RELATIVE_OBJECTIVE_TOL: f64 = 1e-12;
/// Iteration cap.
pub const MAX_ITERATIONS: usize = 200;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone)]
pub struct Optimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Hessian at the returned point.
    pub hessian: Vec<Vec<f64>>,
    /// True iff the gradient max-norm met `GRADIENT_TOL`.
    pub converged: bool,
    pub iterations: usize,
}

/// Maximize a smooth concave objective from `start`.
///
/// `f` returns the objective value and gradient. `hessian` supplies analytic
/// curvature; when absent a central finite-difference Hessian of the
/// gradient is used. The search direction is the Newton step, falling back
/// to steepest ascent when the Newton system is singular or non-ascending;
/// step lengths are halved until the Armijo condition holds.
pub fn maximize<F, H>(f: F, hessian: Option<H>, start: &[f64]) -> Result<Optimum>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
    H: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    let mut x = start.to_vec();
    let (mut value, mut grad) = f(&x);
    if !value.is_finite() {
        return Err(Error::NonFinite { what: "objective at start" });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { what: "gradient at start" });
    }

    let eval_hessian = |x: &[f64]| -> Vec<Vec<f64>> {
        match &hessian {
            Some(h) => h(x),
            None => finite_difference_hessian(&f, x),
        }
    };

    for iteration in 0..MAX_ITERATIONS {
        let grad_norm = max_norm(&grad);
        if grad_norm <= GRADIENT_TOL {
            return Ok(Optimum {
                hessian: eval_hessian(&x),
                point: x,
                value,
                gradient: grad,
                converged: true,
                iterations: iteration,
            });
        }

        let h = eval_hessian(&x);
        // Newton step solves H d = -g; for a concave objective this is an
        // ascent direction. Fall back to the gradient otherwise.
        let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut direction = match solve(&h, &neg_grad) {
            Some(d) if dot(&d, &grad) > 0.0 && d.iter().all(|v| v.is_finite()) => d,
            _ => grad.clone(),
        };
        // Guard absurd step lengths from near-singular curvature.
        let dir_norm = max_norm(&direction);
        if !dir_norm.is_finite() || dir_norm == 0.0 {
            direction = grad.clone();
        } else if dir_norm > 1e6 {
            let scale = 1e6 / dir_norm;
            direction.iter_mut().for_each(|v| *v *= scale);
        }

        let slope = dot(&direction, &grad);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = x
                .iter()
                .zip(&direction)
                .map(|(xi, di)| xi + step * di)
                .collect();
            let (trial_value, trial_grad) = f(&trial);
            if trial_value.is_finite()
                && trial_grad.iter().all(|g| g.is_finite())
                && trial_value >= value + ARMIJO_C * step * slope
            {
                accepted = Some((trial, trial_value, trial_grad));
                break;
            }
            step *= 0.5;
        }

        match accepted {
            Some((trial, trial_value, trial_grad)) => {
                let improvement = trial_value - value;
                let stalled =
                    improvement.abs() <= RELATIVE_OBJECTIVE_TOL * (value.abs().max(1.0));
                x = trial;
                value = trial_value;
                grad = trial_grad;
                if stalled {
                    let converged = max_norm(&grad) <= GRADIENT_TOL;
                    return Ok(Optimum {
                        hessian: eval_hessian(&x),
                        point: x,
                        value,
                        gradient: grad,
                        converged,
                        iterations: iteration + 1,
                    });
                }
            }
            None => {
                // No acceptable step even at ~1e-18 scale: objective is flat
                // to machine precision along the search direction.
                let converged = max_norm(&grad) <= GRADIENT_TOL;
                return Ok(Optimum {
                    hessian: eval_hessian(&x),
                    point: x,
                    value,
                    gradient: grad,
                    converged,
                    iterations: iteration + 1,
                });
            }
        }
    }

    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, last_point: x })
}

#[allow(clippy::needless_range_loop)]
fn finite_difference_hessian<F>(f: &F, x: &[f64]) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x.len();
    let mut h = vec![vec![0.0; n]; n];
    let mut point = x.to_vec();
    for j in 0..n {
        let step = 1e-5 * x[j].abs().max(1.0);
        point[j] = x[j] + step;
        let (_, g_plus) = f(&point);
        point[j] = x[j] - step;
        let (_, g_minus) = f(&point);
        point[j] = x[j];
        for i in 0..n {
            h[i][j] = (g_plus[i] - g_minus[i]) / (2.0 * step);
        }
    }
    // Symmetrize.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = avg;
            h[j][i] = avg;
        }
    }
    h
}

pub(crate) fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when the system is numerically singular.
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(1.0);
    for k in 0..n {
        let (pivot_row, pivot) = (k..n)
            .map(|i| (i, m[i][k].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if pivot <= 1e-12 * scale {
            return None;
        }
        m.swap(k, pivot_row);
        rhs.swap(k, pivot_row);
        for i in (k + 1)..n {
            let factor = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= factor * m[k][j];
            }
            rhs[i] -= factor * rhs[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut sum = rhs[k];
        for j in (k + 1)..n {
            sum -= m[k][j] * x[j];
        }
        x[k] = sum / m[k][k];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Invert a square matrix by Gauss-Jordan elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub(crate) fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut extended = row.clone();
            extended.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            extended
        })
        .collect();
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(1.0);
    for k in 0..n {
        let (pivot_row, pivot) = (k..n)
            .map(|i| (i, m[i][k].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if pivot <= 1e-12 * scale {
            return None;
        }
        m.swap(k, pivot_row);
        let pivot_value = m[k][k];
        for j in 0..2 * n {
            m[k][j] /= pivot_value;
        }
        for i in 0..n {
            if i != k {
                let factor = m[i][k];
                if factor != 0.0 {
                    for j in 0..2 * n {
                        m[i][j] -= factor * m[k][j];
                    }
                }
            }
        }
    }
    let out: Vec<Vec<f64>> = m.into_iter().map(|row| row[n..].to_vec()).collect();
    if out.iter().flatten().all(|v| v.is_finite()) {
        Some(out)
    } else {
        None
    }
}
