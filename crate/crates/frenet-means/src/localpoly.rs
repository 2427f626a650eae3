//! Local polynomial regression for derivatives of noisily observed
//! functions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Condition number above which a local design is refused.
pub const CONDITION_LIMIT: f64 = 1e10;

/// Derivatives `f(t0), f'(t0), ..., f^(degree)(t0)` by weighted polynomial
/// regression in the window `|t - t0| < bandwidth`.
///
/// The design is built on the scaled abscissa `(t - t0) / bandwidth` so its
/// conditioning is independent of the bandwidth; `index` only labels error
/// reports with the caller's grid position.
pub fn local_poly_derivatives(
    ts: &[f64],
    ys: &[f64],
    t0: f64,
    bandwidth: f64,
    degree: usize,
    kernel: Kernel,
    index: usize,
) -> Result<Vec<f64>> {
    assert_eq!(ts.len(), ys.len());
    if !(bandwidth > 0.0) {
        return Err(Error::invalid(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }

    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (&t, &y) in ts.iter().zip(ys) {
        let u = (t - t0) / bandwidth;
        let w = kernel.eval(u);
        if w > 0.0 {
            rows.push((u, y, w));
        }
    }
    if rows.len() < degree + 2 {
        return Err(Error::IllConditioned {
            index,
            cond: f64::INFINITY,
            limit: CONDITION_LIMIT,
        });
    }

    let mut design = DMatrix::zeros(rows.len(), degree + 1);
    let mut target = DVector::zeros(rows.len());
    for (r, &(u, y, w)) in rows.iter().enumerate() {
        let sw = w.sqrt();
        let mut monomial = 1.0;
        for c in 0..=degree {
            design[(r, c)] = sw * monomial;
            monomial *= u;
        }
        target[r] = sw * y;
    }

    let svd = design.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    let cond = sigma_max / sigma_min;
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned {
            index,
            cond,
            limit: CONDITION_LIMIT,
        });
    }
    let beta = svd
        .solve(&target, 0.0)
        .map_err(|e| Error::invalid(e.to_string()))?;

    let mut derivatives = Vec::with_capacity(degree + 1);
    let mut k_factorial = 1.0;
    let mut h_power = 1.0;
    for k in 0..=degree {
        if k > 0 {
            k_factorial *= k as f64;
            h_power *= bandwidth;
        }
        derivatives.push(beta[k] * k_factorial / h_power);
    }
    Ok(derivatives)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::uniform_grid;

    #[test]
    fn exact_on_polynomials_of_fitted_degree() {
        let ts = uniform_grid(0.0, 1.0, 201);
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 * t * t * t - t + 0.5).collect();
        let d = local_poly_derivatives(&ts, &ys, 0.4, 0.08, 3, Kernel::Epanechnikov, 0).unwrap();
        let t = 0.4f64;
        assert!((d[0] - (2.0 * t * t * t - t + 0.5)).abs() < 1e-10);
        assert!((d[1] - (6.0 * t * t - 1.0)).abs() < 1e-9);
        assert!((d[2] - 12.0 * t).abs() < 1e-7);
        assert!((d[3] - 12.0).abs() < 1e-5);
    }

    #[test]
    fn boundary_windows_still_work() {
        let ts = uniform_grid(0.0, 1.0, 401);
        let ys: Vec<f64> = ts.iter().map(|t| t * t).collect();
        let d0 = local_poly_derivatives(&ts, &ys, 0.0, 0.05, 2, Kernel::Epanechnikov, 0).unwrap();
        assert!((d0[0] - 0.0).abs() < 1e-10);
        assert!((d0[1] - 0.0).abs() < 1e-8);
        let d1 = local_poly_derivatives(&ts, &ys, 1.0, 0.05, 2, Kernel::Epanechnikov, 400).unwrap();
        assert!((d1[0] - 1.0).abs() < 1e-10);
        assert!((d1[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn local_linear_slope_bias_matches_kernel_moments() {
        // For an interior point and a dense design, the local-linear slope of
        // f picks up a bias of f'''(t0) h^2 mu4 / (6 mu2). For the kernel
        // 3/4 (1 - u^2) the moment ratio mu4 / mu2 is 3/7, so fitting t^3
        // (f''' = 6) at any t0 gives slope error (3/7) h^2.
        let ts = uniform_grid(0.0, 1.0, 4001);
        let ys: Vec<f64> = ts.iter().map(|t| t * t * t).collect();
        let t0 = 0.5;
        let h = 0.05;
        let d = local_poly_derivatives(&ts, &ys, t0, h, 1, Kernel::Epanechnikov, 0).unwrap();
        let expected_bias = 3.0 / 7.0 * h * h;
        let observed_bias = d[1] - 3.0 * t0 * t0;
        assert!(
            (observed_bias - expected_bias).abs() < 1e-5,
            "observed slope bias {observed_bias}, expected {expected_bias}"
        );
    }

    #[test]
    fn empty_window_is_reported_as_ill_conditioned() {
        let ts = uniform_grid(0.0, 1.0, 11);
        let ys = vec![0.0; 11];
        match local_poly_derivatives(&ts, &ys, 0.55, 0.01, 2, Kernel::Epanechnikov, 5) {
            Err(Error::IllConditioned { index: 5, .. }) => {}
            other => panic!("expected IllConditioned, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_design_is_reported() {
        // All abscissae equal: rank 1 design for a quadratic fit.
        let ts = vec![0.5; 30];
        let ys = vec![1.0; 30];
        match local_poly_derivatives(&ts, &ys, 0.5, 0.1, 2, Kernel::Epanechnikov, 7) {
            Err(Error::IllConditioned { index: 7, .. }) => {}
            other => panic!("expected IllConditioned, got {other:?}"),
        }
    }
}
