//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 60;

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// Classic adaptive Simpson with Richardson correction; fails if the
/// tolerance is not met before the recursion depth limit.
pub fn integrate<F>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if abs_tol.is_nan() || abs_tol <= 0.0 {
        return Err(Error::QuadratureNonConvergence { tol: abs_tol });
    }
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0;
    let mut converged = true;
    let value = adaptive(f, a, m, b, fa, fm, fb, whole, abs_tol, MAX_DEPTH, &mut converged);
    if !converged || !value.is_finite() {
        return Err(Error::QuadratureNonConvergence { tol: abs_tol });
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F>(
    f: &F,
    a: f64,
    m: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: usize,
    converged: &mut bool,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) * (fa + 4.0 * flm + fm) / 6.0;
    let right = (b - m) * (fm + 4.0 * frm + fb) / 6.0;
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *converged = false;
        return left + right + delta / 15.0;
    }
    adaptive(f, a, lm, m, fa, flm, fm, left, 0.5 * eps, depth - 1, converged)
        + adaptive(f, m, rm, b, fm, frm, fb, right, 0.5 * eps, depth - 1, converged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        // Simpson is exact for cubics.
        let v = integrate(&|x: f64| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-10).unwrap();
        assert!((v - (4.0 - 4.0 + 2.0)).abs() < 1e-10, "got {v}");
    }

    #[test]
    fn exponential_tail() {
        let v = integrate(&|x: f64| (-x).exp(), 0.0, 30.0, 1e-10).unwrap();
        assert!((v - (1.0 - (-30.0f64).exp())).abs() < 1e-8);
    }

    #[test]
    fn degenerate_interval_is_zero() {
        assert_eq!(integrate(&|_| 1.0, 3.0, 3.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn oscillatory_converges() {
        let v = integrate(&|x: f64| (10.0 * x).sin(), 0.0, std::f64::consts::PI, 1e-9).unwrap();
        let exact = (1.0 - (10.0 * std::f64::consts::PI).cos()) / 10.0;
        assert!((v - exact).abs() < 1e-7);
    }
}
