//! Grid helpers, trapezoid quadrature and cubic Hermite interpolation on
//! uniform grids.

use crate::error::{Error, Result};

/// `n` equally spaced points covering `[a, b]` inclusive.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "a grid needs at least two points");
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { b } else { a + step * i as f64 })
        .collect()
}

/// Trapezoid rule over a (possibly non-uniform) grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    assert_eq!(grid.len(), values.len());
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
    }
    acc
}

/// Running trapezoid integral; entry `i` integrates up to `grid[i]`.
pub fn cumulative_trapezoid(grid: &[f64], values: &[f64]) -> Vec<f64> {
    assert_eq!(grid.len(), values.len());
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..grid.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
        out.push(acc);
    }
    out
}

/// Index of the cell `[grid[i], grid[i+1]]` containing `x`, clamped to the
/// grid range. `grid` must be sorted ascending.
pub fn find_cell(grid: &[f64], x: f64) -> usize {
    let n = grid.len();
    debug_assert!(n >= 2);
    let idx = grid.partition_point(|&g| g <= x);
    idx.saturating_sub(1).min(n - 2)
}

/// Piecewise-linear interpolation, constant beyond the grid range.
pub fn interp_linear(grid: &[f64], values: &[f64], x: f64) -> f64 {
    assert_eq!(grid.len(), values.len());
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[grid.len() - 1] {
        return values[values.len() - 1];
    }
    let i = find_cell(grid, x);
    let t = (x - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] * (1.0 - t) + values[i + 1] * t
}

/// C1 piecewise-cubic interpolant of samples on a uniform grid, with slopes
/// from second-order central differences (one-sided at the ends).
///
/// Reproduces quadratics exactly; for smooth data the error is `O(h^3)`.
#[derive(Debug, Clone)]
pub struct CubicHermite {
    a: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl CubicHermite {
    pub fn from_uniform_samples(a: f64, b: f64, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 3 {
            return Err(Error::invalid(
                "cubic Hermite interpolation needs at least three samples",
            ));
        }
        if !(b > a) {
            return Err(Error::invalid(format!(
                "degenerate interpolation interval [{a}, {b}]"
            )));
        }
        let step = (b - a) / (n - 1) as f64;
        let mut slopes = Vec::with_capacity(n);
        slopes.push((-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * step));
        for i in 1..n - 1 {
            slopes.push((values[i + 1] - values[i - 1]) / (2.0 * step));
        }
        slopes.push((3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * step));
        Ok(CubicHermite {
            a,
            step,
            values,
            slopes,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.a + self.step * (self.values.len() - 1) as f64)
    }

    /// Evaluates the interpolant, clamping `x` to the sampled range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = ((x - self.a) / self.step).clamp(0.0, (n - 1) as f64);
        let cell = (t as usize).min(n - 2);
        let u = t - cell as f64;
        let (f0, f1) = (self.values[cell], self.values[cell + 1]);
        let (d0, d1) = (self.slopes[cell] * self.step, self.slopes[cell + 1] * self.step);
        let u2 = u * u;
        let u3 = u2 * u;
        f0 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + d0 * (u3 - 2.0 * u2 + u)
            + f1 * (-2.0 * u3 + 3.0 * u2)
            + d1 * (u3 - u2)
    }
}
