//! Registration of curvature/torsion profiles that differ by a monotone
//! reparametrization of arclength.
//!
//! The deformation model is the group action `(gamma . theta)(s) =
//! theta(gamma(s)) gamma'(s)`, which is what a change of curve parameter
//! does to curvature and torsion. A population is aligned by iterating:
//! build a low-rank template of the current profiles by functional PCA,
//! warp every profile toward its own template reconstruction with a
//! dynamic-programming search, and re-average. The fitted warps can then
//! be pushed back onto pseudo-observations so the joint estimator sees a
//! phase-free sample.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dpwarp::solve_monotone_warp;
use crate::error::{Error, Result};
use crate::estimator::{
    fit_theta_splines, raw_log_increments, FitOptions, Hyperparams, PseudoObs, PseudoObsSet,
    ThetaSpline,
};
use crate::frenet::FrenetPath;
use crate::interp::{find_cell, interp_linear, uniform_grid, CubicHermite};

/// Iteration cap of the alignment loop.
pub const ALIGN_MAX_ITER: usize = 20;

/// Convergence threshold on the sup-norm change of the cumulative warps.
pub const ALIGN_TOL: f64 = 1e-3;

/// Grid length on which per-curve profiles are sampled for alignment.
pub const ALIGN_GRID_LEN: usize = 200;

/// Smallest admissible gap between consecutive warp values.
pub const MIN_WARP_INCREMENT: f64 = 1e-9;

/// Allowed rise of the registration objective between iterations before
/// the loop gives up.
const OBJECTIVE_SLACK: f64 = 1e-8;

/// A strictly increasing reparametrization of `[0, 1]` sampled on a
/// uniform grid, with both endpoints fixed.
#[derive(Debug, Clone)]
pub struct Warping {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Warping {
    /// Wraps sampled warp values after checking they form a valid
    /// diffeomorphism sample: endpoints 0 and 1 (snapped exactly) and
    /// gaps of at least [`MIN_WARP_INCREMENT`].
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("a warp needs at least two samples"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("warp values must be finite"));
        }
        let last = values.len() - 1;
        if values[0].abs() > 1e-9 || (values[last] - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "warp endpoints must be 0 and 1, got {} and {}",
                values[0], values[last]
            )));
        }
        values[0] = 0.0;
        values[last] = 1.0;
        for k in 1..values.len() {
            if values[k] - values[k - 1] < MIN_WARP_INCREMENT {
                return Err(Error::invalid(format!(
                    "warp values must increase by at least {MIN_WARP_INCREMENT}, \
                     stalled near sample {k}"
                )));
            }
        }
        let grid = uniform_grid(0.0, 1.0, values.len());
        Ok(Warping { grid, values })
    }

    /// The identity warp on `n` samples.
    pub fn identity(n: usize) -> Self {
        let grid = uniform_grid(0.0, 1.0, n);
        Warping {
            grid: grid.clone(),
            values: grid,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Warp value at `s`, linearly interpolated.
    pub fn eval(&self, s: f64) -> f64 {
        interp_linear(&self.grid, &self.values, s.clamp(0.0, 1.0))
    }

    /// Inverse warp value at `v`, well defined by strict monotonicity.
    /// Exact inverse of [`Warping::eval`] up to rounding.
    pub fn eval_inverse(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        let i = find_cell(&self.values, v);
        let t = (v - self.values[i]) / (self.values[i + 1] - self.values[i]);
        self.grid[i] + t * (self.grid[i + 1] - self.grid[i])
    }

    /// Derivative samples on the grid: central differences inside,
    /// second-order one-sided stencils at the ends.
    pub fn derivative_samples(&self) -> Vec<f64> {
        let n = self.values.len();
        let d = self.grid[1] - self.grid[0];
        if n == 2 {
            let slope = (self.values[1] - self.values[0]) / d;
            return vec![slope, slope];
        }
        let mut out = vec![0.0; n];
        out[0] = (-3.0 * self.values[0] + 4.0 * self.values[1] - self.values[2]) / (2.0 * d);
        out[n - 1] =
            (3.0 * self.values[n - 1] - 4.0 * self.values[n - 2] + self.values[n - 3]) / (2.0 * d);
        for k in 1..n - 1 {
            out[k] = (self.values[k + 1] - self.values[k - 1]) / (2.0 * d);
        }
        out
    }

    /// Derivative at `s`, interpolated from [`Warping::derivative_samples`].
    /// Recomputes the samples; hoist them out of any hot loop.
    pub fn derivative_at(&self, s: f64) -> f64 {
        interp_linear(&self.grid, &self.derivative_samples(), s.clamp(0.0, 1.0))
    }

    /// The composition `self(inner(s))`, sampled on `inner`'s grid.
    /// Evaluates `self` through a cubic interpolant so the composite keeps
    /// smooth derivatives; piecewise-linear sampling would leave kinks that
    /// centered differences amplify.
    pub fn compose(&self, inner: &Warping) -> Warping {
        let mut values: Vec<f64> = if self.values.len() < 3 {
            inner.values.iter().map(|&v| self.eval(v)).collect()
        } else {
            let outer = CubicHermite::from_uniform_samples(0.0, 1.0, self.values.clone())
                .expect("warp samples are a valid uniform table");
            inner
                .values
                .iter()
                .map(|&v| outer.eval(v).clamp(0.0, 1.0))
                .collect()
        };
        enforce_monotone(&mut values);
        Warping {
            grid: inner.grid.clone(),
            values,
        }
    }

    /// The inverse warp, sampled on a uniform grid of the same length.
    pub fn inverse(&self) -> Warping {
        let values: Vec<f64> = self.grid.iter().map(|&s| self.eval_inverse(s)).collect();
        Warping {
            grid: self.grid.clone(),
            values,
        }
    }
}

/// Pins the endpoints at 0 and 1 and pushes near-ties apart until every
/// gap clears the minimum increment.
fn enforce_monotone(values: &mut [f64]) {
    let last = values.len() - 1;
    values[0] = 0.0;
    values[last] = 1.0;
    for k in 1..last {
        if values[k] < values[k - 1] + MIN_WARP_INCREMENT {
            values[k] = values[k - 1] + MIN_WARP_INCREMENT;
        }
    }
    for k in (1..last).rev() {
        if values[k] > values[k + 1] - MIN_WARP_INCREMENT {
            values[k] = values[k + 1] - MIN_WARP_INCREMENT;
        }
    }
}

/// Curvature and torsion sampled on a shared uniform grid over `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ThetaProfile {
    pub grid: Vec<f64>,
    pub kappa: Vec<f64>,
    pub tau: Vec<f64>,
}

impl ThetaProfile {
    pub fn new(grid: Vec<f64>, kappa: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if n < 4 {
            return Err(Error::invalid("a profile needs at least four samples"));
        }
        if kappa.len() != n || tau.len() != n {
            return Err(Error::invalid("profile channels must match the grid length"));
        }
        let d = 1.0 / (n - 1) as f64;
        for (k, &g) in grid.iter().enumerate() {
            if (g - k as f64 * d).abs() > 1e-9 {
                return Err(Error::invalid(
                    "profile grid must be uniform from 0 to 1 inclusive",
                ));
            }
        }
        if kappa.iter().chain(tau.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("profile values must be finite"));
        }
        Ok(ThetaProfile { grid, kappa, tau })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Applies the reparametrization action: each channel becomes
/// `f(gamma(s)) * gamma'(s)`, evaluated back on the profile's own grid
/// with linear interpolation and centered-difference derivatives.
pub fn warp_action(profile: &ThetaProfile, gamma: &Warping) -> ThetaProfile {
    let derivs = gamma.derivative_samples();
    let n = profile.grid.len();
    let mut kappa = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    for &s in &profile.grid {
        let g = gamma.eval(s);
        let gp = interp_linear(gamma.grid(), &derivs, s);
        kappa.push(interp_linear(&profile.grid, &profile.kappa, g) * gp);
        tau.push(interp_linear(&profile.grid, &profile.tau, g) * gp);
    }
    ThetaProfile {
        grid: profile.grid.clone(),
        kappa,
        tau,
    }
}

/// A truncated functional principal component model of an ensemble of
/// grid-sampled functions.
#[derive(Debug, Clone)]
pub struct FpcaModel {
    /// Weighted ensemble mean on the grid.
    pub mean: Vec<f64>,
    /// Component functions, strongest first, orthonormal in the discrete
    /// trapezoid inner product.
    pub components: Vec<Vec<f64>>,
    /// Per-function scores, one row per input, aligned with `components`.
    pub scores: Vec<Vec<f64>>,
    /// Every strictly positive ensemble eigenvalue, strongest first; may
    /// run past the retained components.
    pub eigenvalues: Vec<f64>,
    ip: Vec<f64>,
}

impl FpcaModel {
    /// Mean plus the retained components scaled by function `i`'s scores.
    pub fn reconstruct(&self, i: usize) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, comp) in self.components.iter().enumerate() {
            let xi = self.scores[i][c];
            for (o, &p) in out.iter_mut().zip(comp) {
                *o += xi * p;
            }
        }
        out
    }

    /// Scores of an arbitrary grid function against the retained
    /// components.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|comp| {
                f.iter()
                    .zip(&self.mean)
                    .zip(comp)
                    .zip(&self.ip)
                    .map(|(((&fv, &mv), &cv), &w)| w * (fv - mv) * cv)
                    .sum()
            })
            .collect()
    }
}

/// Trapezoid quadrature weights of a sorted grid.
fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let h = 0.5 * (grid[k + 1] - grid[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

/// Principal components of weighted functions through the eigenvectors
/// of their inner-product matrix, keeping at most `k` of them.
fn weighted_fpca(ip: &[f64], functions: &[DVector<f64>], omega: &[f64], k: usize) -> FpcaModel {
    let n = functions.len();
    let dim = functions[0].len();
    let ipd = DVector::from_column_slice(ip);
    let mut mean = DVector::zeros(dim);
    for (f, &w) in functions.iter().zip(omega) {
        mean += f * w;
    }
    let centered: Vec<DVector<f64>> = functions.iter().map(|f| f - &mean).collect();

    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let dot = centered[i].component_mul(&ipd).dot(&centered[j]);
            let v = (omega[i] * omega[j]).sqrt() * dot;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let lead = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&j| eig.eigenvalues[j] > lead * 1e-12 && eig.eigenvalues[j] > 0.0)
        .collect();
    let eigenvalues: Vec<f64> = kept.iter().map(|&j| eig.eigenvalues[j]).collect();

    let k_eff = k.min(kept.len()).min(n.saturating_sub(1));
    let mut components: Vec<DVector<f64>> = Vec::with_capacity(k_eff);
    for &j in kept.iter().take(k_eff) {
        let mut comp = DVector::zeros(dim);
        for i in 0..n {
            comp += &centered[i] * (omega[i].sqrt() * eig.eigenvectors[(i, j)]);
        }
        comp /= eig.eigenvalues[j].sqrt();
        let norm = comp.component_mul(&ipd).dot(&comp).sqrt();
        if norm > 0.0 {
            comp /= norm;
        }
        components.push(comp);
    }
    let scores: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.component_mul(&ipd).dot(&centered[i]))
                .collect()
        })
        .collect();
    FpcaModel {
        mean: mean.iter().copied().collect(),
        components: components.iter().map(|c| c.iter().copied().collect()).collect(),
        scores,
        eigenvalues,
        ip: ip.to_vec(),
    }
}

/// Functional PCA of equally weighted grid samples, truncated to `k`
/// components. Requires at least `k + 1` functions; fewer components are
/// returned when the ensemble rank is lower.
pub fn fpca(grid: &[f64], functions: &[Vec<f64>], k: usize) -> Result<FpcaModel> {
    let n = functions.len();
    if n < 2 {
        return Err(Error::invalid("an ensemble needs at least two functions"));
    }
    if grid.len() < 2 {
        return Err(Error::invalid("the grid needs at least two points"));
    }
    if functions.iter().any(|f| f.len() != grid.len()) {
        return Err(Error::invalid("every function must match the grid length"));
    }
    if k + 1 > n {
        return Err(Error::invalid(format!(
            "{k} components need at least {} functions, got {n}",
            k + 1
        )));
    }
    let ip = trapezoid_weights(grid);
    let funcs: Vec<DVector<f64>> = functions
        .iter()
        .map(|f| DVector::from_column_slice(f))
        .collect();
    let omega = vec![1.0 / n as f64; n];
    Ok(weighted_fpca(&ip, &funcs, &omega, k))
}

fn same_grid(a: &ThetaProfile, b: &ThetaProfile) -> Result<()> {
    if a.grid.len() != b.grid.len()
        || a.grid
            .iter()
            .zip(&b.grid)
            .any(|(x, y)| (x - y).abs() > 1e-12)
    {
        return Err(Error::invalid("profiles must share one grid"));
    }
    Ok(())
}

fn stack_scaled(p: &ThetaProfile, kappa_scale: f64, tau_scale: f64) -> DVector<f64> {
    let m = p.grid.len();
    let mut out = DVector::zeros(2 * m);
    for k in 0..m {
        out[k] = p.kappa[k] * kappa_scale;
        out[m + k] = p.tau[k] * tau_scale;
    }
    out
}

fn unscale_profile(
    y: &DVector<f64>,
    grid: &[f64],
    kappa_scale: f64,
    tau_scale: f64,
) -> ThetaProfile {
    let m = grid.len();
    ThetaProfile {
        grid: grid.to_vec(),
        kappa: (0..m).map(|k| y[k] / kappa_scale).collect(),
        tau: (0..m).map(|k| y[m + k] / tau_scale).collect(),
    }
}

fn unstack(y: &DVector<f64>, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(y.len() / m, m, |c, k| y[c * m + k])
}

/// Linear interpolation of uniform samples over `[0, 1]` at `x`.
fn interp_unit_uniform(values: &[f64], x: f64) -> f64 {
    let last = values.len() - 1;
    let p = x.clamp(0.0, 1.0) * last as f64;
    let j = (p.floor() as usize).min(last - 1);
    let t = p - j as f64;
    values[j] * (1.0 - t) + values[j + 1] * t
}

/// Iteration cap for the Gauss-Newton polish of a lattice warp.
const REFINE_MAX_ITERS: usize = 40;

/// Centered-difference derivative samples of warp values on the unit grid,
/// second-order one-sided at the ends. Mirrors [`Warping::derivative_samples`]
/// for a bare slice.
fn warp_derivs(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dx);
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dx);
    for k in 1..n - 1 {
        out[k] = (values[k + 1] - values[k - 1]) / (2.0 * dx);
    }
    out
}

/// The registration residual the action produces for candidate warp values:
/// channel-wise squared mismatch between `target` and the warped `source`,
/// summed with the `ip` quadrature weights.
fn warp_objective(target: &DMatrix<f64>, source: &DMatrix<f64>, ip: &[f64], values: &[f64]) -> f64 {
    let m = values.len();
    let dx = 1.0 / (m - 1) as f64;
    let derivs = warp_derivs(values, dx);
    let last = m - 1;
    let mut acc = 0.0;
    for j in 0..m {
        let p = values[j].clamp(0.0, 1.0) * last as f64;
        let cell = (p.floor() as usize).min(last - 1);
        let t = p - cell as f64;
        let mut node = 0.0;
        for c in 0..target.nrows() {
            let sv = source[(c, cell)] * (1.0 - t) + source[(c, cell + 1)] * t;
            let r = sv * derivs[j] - target[(c, j)];
            node += r * r;
        }
        acc += ip[j] * node;
    }
    acc
}

/// Polishes lattice warp values against the exact residual the action
/// produces, centered-difference derivatives included. Damped Gauss-Newton
/// on the interior values with a backtracking line search; every accepted
/// step lowers the objective, so the result is never worse than the input.
fn refine_warp_values(
    target: &DMatrix<f64>,
    source: &DMatrix<f64>,
    ip: &[f64],
    values: &mut [f64],
) {
    let m = values.len();
    if m < 4 {
        return;
    }
    let dx = 1.0 / (m - 1) as f64;
    let last = m - 1;
    let free = m - 2;
    let channels = target.nrows();
    let mut current = warp_objective(target, source, ip, values);

    for _ in 0..REFINE_MAX_ITERS {
        let derivs = warp_derivs(values, dx);
        let mut normal = DMatrix::<f64>::zeros(free, free);
        let mut rhs = DVector::<f64>::zeros(free);
        let mut coefs: Vec<(usize, f64)> = Vec::with_capacity(3);
        for j in 0..m {
            let p = values[j].clamp(0.0, 1.0) * last as f64;
            let cell = (p.floor() as usize).min(last - 1);
            let t = p - cell as f64;
            for c in 0..channels {
                let lo = source[(c, cell)];
                let hi = source[(c, cell + 1)];
                let sv = lo * (1.0 - t) + hi * t;
                let slope = (hi - lo) * last as f64;
                let residual = sv * derivs[j] - target[(c, j)];
                coefs.clear();
                if j >= 1 && j <= m - 2 {
                    coefs.push((j, slope * derivs[j]));
                }
                if j == 0 {
                    coefs.push((1, 2.0 * sv / dx));
                    coefs.push((2, -sv / (2.0 * dx)));
                } else if j == m - 1 {
                    coefs.push((m - 2, -2.0 * sv / dx));
                    coefs.push((m - 3, sv / (2.0 * dx)));
                } else {
                    if j >= 2 {
                        coefs.push((j - 1, -sv / (2.0 * dx)));
                    }
                    if j + 1 <= m - 2 {
                        coefs.push((j + 1, sv / (2.0 * dx)));
                    }
                }
                for &(k1, g1) in &coefs {
                    rhs[k1 - 1] -= ip[j] * g1 * residual;
                    for &(k2, g2) in &coefs {
                        normal[(k1 - 1, k2 - 1)] += ip[j] * g1 * g2;
                    }
                }
            }
        }

        let trace: f64 = (0..free).map(|k| normal[(k, k)]).sum();
        let mut damping = 1e-10 * (trace / free as f64).max(1e-30);
        let step = loop {
            let mut damped = normal.clone();
            for k in 0..free {
                damped[(k, k)] += damping;
            }
            match damped.cholesky() {
                Some(ch) => break ch.solve(&rhs),
                None => damping = (damping * 100.0).max(1e-20),
            }
            if damping > 1e10 * trace.max(1.0) {
                return;
            }
        };

        let mut improved = false;
        let mut t = 1.0;
        for _ in 0..10 {
            let mut candidate = values.to_vec();
            for k in 0..free {
                candidate[k + 1] += t * step[k];
            }
            enforce_monotone(&mut candidate);
            let trial = warp_objective(target, source, ip, &candidate);
            if trial < current {
                values.copy_from_slice(&candidate);
                improved = trial < current * (1.0 - 1e-12);
                current = trial;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
}

/// Lattice search plus continuous polish, wrapped into a valid warp.
fn solve_refined_warp(
    target: &DMatrix<f64>,
    source: &DMatrix<f64>,
    ip: &[f64],
    grid: &[f64],
) -> Warping {
    let mut values = solve_monotone_warp(target, source);
    refine_warp_values(target, source, ip, &mut values);
    enforce_monotone(&mut values);
    Warping {
        grid: grid.to_vec(),
        values,
    }
}

/// The warp action on a stacked multi-channel vector whose grid matches
/// the warp's own grid.
fn act_stacked(y: &DVector<f64>, gamma: &Warping, m: usize) -> DVector<f64> {
    let derivs = gamma.derivative_samples();
    let channels = y.len() / m;
    let mut out = DVector::zeros(y.len());
    let data = y.as_slice();
    for k in 0..m {
        let g = gamma.values[k];
        let gp = derivs[k];
        for c in 0..channels {
            let row = &data[c * m..(c + 1) * m];
            out[c * m + k] = interp_unit_uniform(row, g) * gp;
        }
    }
    out
}

fn ip_residual_sq(a: &DVector<f64>, b: &DVector<f64>, ip: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(ip)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum()
}

/// Median absolute value, floored away from zero so it can serve as a
/// channel scale.
fn median_abs<I: Iterator<Item = f64>>(values: I) -> f64 {
    let mut v: Vec<f64> = values.map(f64::abs).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let med = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    med.max(1e-12)
}

fn reconstruct_k(model: &FpcaModel, i: usize, k: usize) -> DVector<f64> {
    let mut out = DVector::from_column_slice(&model.mean);
    for c in 0..k.min(model.components.len()) {
        let xi = model.scores[i][c];
        for (o, &p) in out.iter_mut().zip(&model.components[c]) {
            *o += xi * p;
        }
    }
    out
}

/// Best monotone reparametrization carrying `source` toward `target`
/// under the derivative-scaled action: a dynamic-programming lattice
/// search plus one continuous refinement pass. Falls back to the identity
/// whenever warping would not beat leaving the source alone.
pub fn optimal_warp(target: &ThetaProfile, source: &ThetaProfile) -> Result<Warping> {
    same_grid(target, source)?;
    let m = target.grid.len();
    let ip = trapezoid_weights(&target.grid);
    let ip2: Vec<f64> = ip.iter().chain(ip.iter()).copied().collect();
    let t = stack_scaled(target, 1.0, 1.0);
    let s = stack_scaled(source, 1.0, 1.0);
    let gamma = solve_refined_warp(&unstack(&t, m), &unstack(&s, m), &ip, &target.grid);
    let moved = act_stacked(&s, &gamma, m);
    if ip_residual_sq(&s, &t, &ip2) < ip_residual_sq(&moved, &t, &ip2) {
        Ok(Warping::identity(m))
    } else {
        Ok(gamma)
    }
}

/// Everything the alignment loop hands back.
#[derive(Debug, Clone)]
pub struct AlignOutcome {
    /// Input profiles carried to the common parametrization.
    pub aligned: Vec<ThetaProfile>,
    /// Cumulative warp per profile; applying it to the raw input through
    /// the action reproduces the aligned profile.
    pub warpings: Vec<Warping>,
    /// Weighted ensemble mean after the final iteration.
    pub template: ThetaProfile,
    /// False when the loop hit its iteration cap, or when the
    /// registration objective rose and the last consistent iterate was
    /// returned instead.
    pub converged: bool,
    pub iterations: usize,
}

/// Iterative registration of raw per-curve profiles.
///
/// Each round warps every profile toward its target and re-averages the
/// template, until the cumulative warps move less than `tol` in sup norm.
/// With `k = None` the target is the weighted ensemble mean itself; passing
/// `Some(k)` refines each target with the profile's own top-`k` functional
/// principal components, which preserves per-curve amplitude structure but
/// can leave phase variation inside the retained components. The two
/// channels are balanced by their population median absolute values, and
/// warps that fail to improve on the identity are discarded, so the
/// objective cannot drift upward. On return the cumulative warps are
/// centered so their weighted mean is the identity, which pins down the
/// common parametrization the ensemble is registered to.
pub fn align_raw_estimates(
    profiles: &[ThetaProfile],
    k: Option<usize>,
    omega: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<AlignOutcome> {
    let n = profiles.len();
    if n < 2 {
        return Err(Error::invalid("alignment needs at least two profiles"));
    }
    if omega.len() != n {
        return Err(Error::invalid("one weight per profile"));
    }
    if omega.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::invalid("weights must be positive"));
    }
    let total: f64 = omega.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "weights must sum to one, got {total}"
        )));
    }
    for p in &profiles[1..] {
        same_grid(&profiles[0], p)?;
    }
    let grid = &profiles[0].grid;
    let m = grid.len();

    let kappa_scale = 1.0 / median_abs(profiles.iter().flat_map(|p| p.kappa.iter().copied()));
    let tau_scale = 1.0 / median_abs(profiles.iter().flat_map(|p| p.tau.iter().copied()));
    let ip = trapezoid_weights(grid);
    let ip2: Vec<f64> = ip.iter().chain(ip.iter()).copied().collect();

    let mut ys: Vec<DVector<f64>> = profiles
        .iter()
        .map(|p| stack_scaled(p, kappa_scale, tau_scale))
        .collect();
    let mut warps: Vec<Warping> = (0..n).map(|_| Warping::identity(m)).collect();
    let mut converged = false;
    let mut iterations = 0;
    let k_use = k.map_or(0, |v| v.min(n - 1));
    let mut prev_objective = f64::INFINITY;

    for ell in 1..=max_iter {
        let model = weighted_fpca(&ip2, &ys, omega, k_use);
        let targets: Vec<DVector<f64>> = (0..n).map(|i| reconstruct_k(&model, i, k_use)).collect();
        let objective: f64 = ys
            .iter()
            .zip(&targets)
            .zip(omega)
            .map(|((y, t), &w)| w * ip_residual_sq(y, t, &ip2))
            .sum();
        if objective > prev_objective + OBJECTIVE_SLACK {
            converged = false;
            break;
        }
        prev_objective = objective;
        iterations = ell;

        let updates: Vec<Warping> = ys
            .par_iter()
            .zip(targets.par_iter())
            .map(|(y, t)| {
                let gamma = solve_refined_warp(&unstack(t, m), &unstack(y, m), &ip, grid);
                let moved = act_stacked(y, &gamma, m);
                if ip_residual_sq(&moved, t, &ip2) <= ip_residual_sq(y, t, &ip2) {
                    gamma
                } else {
                    Warping::identity(m)
                }
            })
            .collect();

        let mut delta = 0.0f64;
        for i in 0..n {
            let moved = act_stacked(&ys[i], &updates[i], m);
            ys[i] = moved;
            let next = warps[i].compose(&updates[i]);
            for (a, b) in next.values.iter().zip(&warps[i].values) {
                delta = delta.max((a - b).abs());
            }
            warps[i] = next;
        }
        if delta < tol {
            converged = true;
            break;
        }
    }

    let mut mean_warp = vec![0.0; m];
    for (w, &wt) in warps.iter().zip(omega) {
        for (acc, &v) in mean_warp.iter_mut().zip(&w.values) {
            *acc += wt * v;
        }
    }
    let drift = mean_warp
        .iter()
        .zip(grid)
        .map(|(v, s)| (v - s).abs())
        .fold(0.0f64, f64::max);
    if drift > 1e-12 {
        let rho = Warping {
            grid: grid.to_vec(),
            values: mean_warp,
        }
        .inverse();
        for i in 0..n {
            warps[i] = warps[i].compose(&rho);
            ys[i] = act_stacked(&ys[i], &rho, m);
        }
    }

    let mut template_vec = DVector::zeros(2 * m);
    for (y, &w) in ys.iter().zip(omega) {
        template_vec += y * w;
    }
    let aligned = ys
        .iter()
        .map(|y| unscale_profile(y, grid, kappa_scale, tau_scale))
        .collect();
    let template = unscale_profile(&template_vec, grid, kappa_scale, tau_scale);
    Ok(AlignOutcome {
        aligned,
        warpings: warps,
        template,
        converged,
        iterations,
    })
}

/// Everything the phase-aware estimator hands back.
#[derive(Debug, Clone)]
pub struct PhaseFit {
    pub theta: ThetaSpline,
    /// Cumulative warp per curve, mapping the common parameter to the
    /// curve's own one.
    pub warpings: Vec<Warping>,
    /// Aligned-ensemble mean used as the registration template.
    pub template: ThetaProfile,
    pub align_converged: bool,
    pub align_iterations: usize,
}

/// Estimates the mean parameter when curves share their shape only up to
/// monotone reparametrization.
///
/// Per-curve profiles are pre-smoothed splines of each curve's own
/// pseudo-observations; aligning them yields one warp per curve, the
/// pseudo-observations are carried through the inverse warp (positions
/// remapped, readings scaled by the warp derivative), and a final joint
/// fit runs on the registered records. `k` is forwarded to
/// [`align_raw_estimates`]; `None` registers to the ensemble mean.
pub fn estimate_mean_theta_phase(
    paths: &[FrenetPath],
    hp: Hyperparams,
    k: Option<usize>,
    opts: &FitOptions,
) -> Result<PhaseFit> {
    if paths.len() < 2 {
        return Err(Error::invalid("phase alignment needs at least two curves"));
    }
    let set = raw_log_increments(paths, hp.h, opts.kernel)?;
    let mut per_curve: Vec<Vec<PseudoObs>> = vec![Vec::new(); paths.len()];
    for r in &set.records {
        per_curve[r.curve].push(*r);
    }
    let grid = uniform_grid(0.0, 1.0, ALIGN_GRID_LEN);
    let profiles: Vec<ThetaProfile> = per_curve
        .par_iter()
        .map(|records| {
            let sub = PseudoObsSet {
                records: records.clone(),
                dropped: 0,
            };
            let fit = fit_theta_splines(&sub, hp, opts)?;
            let kappa = grid.iter().map(|&s| fit.kappa.eval(s)).collect();
            let tau = grid.iter().map(|&s| fit.tau.eval(s)).collect();
            ThetaProfile::new(grid.clone(), kappa, tau)
        })
        .collect::<Result<Vec<_>>>()?;

    let omega = vec![1.0 / paths.len() as f64; paths.len()];
    let outcome = align_raw_estimates(&profiles, k, &omega, ALIGN_MAX_ITER, ALIGN_TOL)?;

    let derivs: Vec<Vec<f64>> = outcome
        .warpings
        .iter()
        .map(|w| w.derivative_samples())
        .collect();
    let mut records = set.records;
    for r in &mut records {
        let warp = &outcome.warpings[r.curve];
        let v = warp.eval_inverse(r.v);
        let factor = interp_linear(warp.grid(), &derivs[r.curve], v);
        r.v = v;
        r.r1 *= factor;
        r.r2 *= factor;
        r.r3 *= factor;
    }
    let theta = fit_theta_splines(
        &PseudoObsSet {
            records,
            dropped: set.dropped,
        },
        hp,
        opts,
    )?;
    Ok(PhaseFit {
        theta,
        warpings: outcome.warpings,
        template: outcome.template,
        align_converged: outcome.converged,
        align_iterations: outcome.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::estimate_mean_theta;
    use crate::frenet::{solve_frenet_path, FnTheta, DEFAULT_SUBSTEP};
    use crate::interp::trapezoid;
    use crate::so3::{exp_so3, Rot3, Skew3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sample_warp(n: usize, f: impl Fn(f64) -> f64) -> Warping {
        let values = uniform_grid(0.0, 1.0, n).iter().map(|&s| f(s)).collect();
        Warping::new(values).unwrap()
    }

    fn exp_warp(a: f64) -> impl Fn(f64) -> f64 {
        move |s| {
            if a == 0.0 {
                s
            } else {
                ((a * s).exp() - 1.0) / (a.exp() - 1.0)
            }
        }
    }

    fn log_warp(a: f64) -> impl Fn(f64) -> f64 {
        move |s| {
            if a == 0.0 {
                s
            } else {
                (s * (a.exp() - 1.0) + 1.0).ln() / a
            }
        }
    }

    fn wavy_profile(n: usize) -> ThetaProfile {
        let grid = uniform_grid(0.0, 1.0, n);
        let kappa = grid
            .iter()
            .map(|&s| 10.0 * ((3.0 * s).sin() + 1.0))
            .collect();
        let tau = grid
            .iter()
            .map(|&s| -10.0 * (2.0 * std::f64::consts::PI * s).sin())
            .collect();
        ThetaProfile::new(grid, kappa, tau).unwrap()
    }

    /// Low-amplitude profile for tolerance-sensitive identities, keeping
    /// linear-interpolation error well below the asserted bounds.
    fn gentle_profile(n: usize) -> ThetaProfile {
        let grid = uniform_grid(0.0, 1.0, n);
        let kappa = grid.iter().map(|&s| 2.0 + (3.0 * s).sin()).collect();
        let tau = grid
            .iter()
            .map(|&s| -(2.0 * std::f64::consts::PI * s).sin())
            .collect();
        ThetaProfile::new(grid, kappa, tau).unwrap()
    }

    fn profile_dist_sq(a: &ThetaProfile, b: &ThetaProfile) -> f64 {
        let ip = trapezoid_weights(&a.grid);
        let mut acc = 0.0;
        for k in 0..a.grid.len() {
            acc += ip[k] * ((a.kappa[k] - b.kappa[k]).powi(2) + (a.tau[k] - b.tau[k]).powi(2));
        }
        acc
    }

    #[test]
    fn identity_action_is_a_no_op() {
        let profile = wavy_profile(101);
        let out = warp_action(&profile, &Warping::identity(101));
        for k in 0..101 {
            assert!((out.kappa[k] - profile.kappa[k]).abs() < 1e-10);
            assert!((out.tau[k] - profile.tau[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn the_action_composes_as_a_group() {
        let n = 1001;
        let profile = gentle_profile(n);
        let g1 = sample_warp(n, exp_warp(1.0));
        let g2 = sample_warp(n, exp_warp(-0.7));
        let two_steps = warp_action(&warp_action(&profile, &g1), &g2);
        let one_step = warp_action(&profile, &g1.compose(&g2));
        for k in 0..n {
            assert!(
                (two_steps.kappa[k] - one_step.kappa[k]).abs() < 1e-4,
                "kappa mismatch at {k}"
            );
            assert!(
                (two_steps.tau[k] - one_step.tau[k]).abs() < 1e-4,
                "tau mismatch at {k}"
            );
        }
    }

    #[test]
    fn composing_a_warp_with_its_inverse_cancels() {
        let n = 301;
        let g = sample_warp(n, exp_warp(0.9));
        let id = g.compose(&g.inverse());
        for (v, s) in id.values().iter().zip(id.grid()) {
            assert!((v - s).abs() < 1e-5, "{v} vs {s}");
        }
    }

    #[test]
    fn total_turning_is_invariant_under_the_action() {
        let n = 801;
        let profile = gentle_profile(n);
        let warped = warp_action(&profile, &sample_warp(n, exp_warp(1.0)));
        let before = trapezoid(&profile.grid, &profile.kappa);
        let after = trapezoid(&warped.grid, &warped.kappa);
        assert!((before - after).abs() < 1e-4, "{before} vs {after}");
    }

    #[test]
    fn fpca_of_identical_functions_is_the_mean() {
        let grid = uniform_grid(0.0, 1.0, 80);
        let f: Vec<f64> = grid.iter().map(|&s| 1.0 + (4.0 * s).cos()).collect();
        let model = fpca(&grid, &[f.clone(), f.clone(), f.clone(), f.clone()], 2).unwrap();
        assert!(model.eigenvalues.is_empty());
        assert!(model.components.is_empty());
        for i in 0..4 {
            let rec = model.reconstruct(i);
            for (r, v) in rec.iter().zip(&f) {
                assert!((r - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fpca_recovers_a_planted_component() {
        let grid = uniform_grid(0.0, 1.0, 120);
        let ip = trapezoid_weights(&grid);
        let raw: Vec<f64> = grid
            .iter()
            .map(|&s| (std::f64::consts::PI * s).sin())
            .collect();
        let norm = raw
            .iter()
            .zip(&ip)
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt();
        let phi: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let nu: Vec<f64> = grid.iter().map(|&s| 1.0 + s).collect();
        let plus: Vec<f64> = nu.iter().zip(&phi).map(|(n, p)| n + 0.3 * p).collect();
        let minus: Vec<f64> = nu.iter().zip(&phi).map(|(n, p)| n - 0.3 * p).collect();
        let model = fpca(&grid, &[plus.clone(), minus], 1).unwrap();
        assert_eq!(model.components.len(), 1);
        let cosine: f64 = model.components[0]
            .iter()
            .zip(&phi)
            .zip(&ip)
            .map(|((a, b), w)| w * a * b)
            .sum();
        assert!(cosine.abs() > 1.0 - 1e-12, "angle too wide: {cosine}");
        assert!((model.scores[0][0].abs() - 0.3).abs() < 1e-10);
        let rec = model.reconstruct(0);
        for (r, v) in rec.iter().zip(&plus) {
            assert!((r - v).abs() < 1e-10);
        }
    }

    #[test]
    fn fpca_error_is_monotone_in_the_component_count() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let grid = uniform_grid(0.0, 1.0, 90);
        let ip = trapezoid_weights(&grid);
        let n = 12;
        let functions: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let coef: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
                grid.iter()
                    .map(|&s| {
                        coef.iter()
                            .enumerate()
                            .map(|(j, c)| c * ((j + 1) as f64 * s).sin() / (j + 1) as f64)
                            .sum()
                    })
                    .collect()
            })
            .collect();

        let full = fpca(&grid, &functions, 8).unwrap();
        let gram_dim = full.components.len();
        for a in 0..gram_dim {
            for b in 0..gram_dim {
                let dot: f64 = full.components[a]
                    .iter()
                    .zip(&full.components[b])
                    .zip(&ip)
                    .map(|((x, y), w)| w * x * y)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8, "gram defect at ({a}, {b})");
            }
        }

        let total_var: f64 = (0..n)
            .map(|i| {
                functions[i]
                    .iter()
                    .zip(&full.mean)
                    .zip(&ip)
                    .map(|((f, m), w)| w * (f - m) * (f - m))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n as f64;
        let spectrum: f64 = full.eigenvalues.iter().sum();
        assert!((total_var - spectrum).abs() < 1e-10 * total_var.max(1.0));

        let mut prev = f64::INFINITY;
        for k in 1..=8 {
            let model = fpca(&grid, &functions, k).unwrap();
            let err: f64 = (0..n)
                .map(|i| {
                    let rec = model.reconstruct(i);
                    functions[i]
                        .iter()
                        .zip(&rec)
                        .zip(&ip)
                        .map(|((f, r), w)| w * (f - r) * (f - r))
                        .sum::<f64>()
                })
                .sum();
            assert!(err <= prev + 1e-12, "error rose at k = {k}");
            prev = err;
        }
    }

    #[test]
    fn equal_profiles_warp_to_the_identity() {
        let profile = wavy_profile(200);
        let gamma = optimal_warp(&profile, &profile).unwrap();
        for (v, s) in gamma.values().iter().zip(gamma.grid()) {
            assert!((v - s).abs() <= 1.0 / 199.0, "cell-size drift: {v} at {s}");
        }
    }

    #[test]
    fn optimal_warp_undoes_a_known_reparametrization() {
        let n = 200;
        let target = wavy_profile(n);
        let source = warp_action(&target, &sample_warp(n, exp_warp(1.0)));
        let gamma = optimal_warp(&target, &source).unwrap();
        let back = warp_action(&source, &gamma);
        let residual = profile_dist_sq(&back, &target).sqrt();
        let scale = profile_dist_sq(
            &target,
            &ThetaProfile::new(
                target.grid.clone(),
                vec![0.0; n],
                vec![0.0; n],
            )
            .unwrap(),
        )
        .sqrt();
        assert!(residual <= 0.05 * scale, "residual {residual} vs {scale}");
    }

    #[test]
    fn optimal_warp_never_does_worse_than_staying_put() {
        let n = 200;
        let target = wavy_profile(n);
        let mut source = warp_action(&target, &sample_warp(n, exp_warp(0.8)));
        for v in source.kappa.iter_mut().chain(source.tau.iter_mut()) {
            *v *= 1.15;
        }
        let gamma = optimal_warp(&target, &source).unwrap();
        let moved = warp_action(&source, &gamma);
        assert!(profile_dist_sq(&moved, &target) <= profile_dist_sq(&source, &target) + 1e-12);
    }

    #[test]
    fn aligning_identical_profiles_is_a_fixed_point() {
        let profile = wavy_profile(150);
        let profiles = vec![profile.clone(), profile.clone(), profile.clone()];
        let omega = vec![1.0 / 3.0; 3];
        let out = align_raw_estimates(&profiles, None, &omega, ALIGN_MAX_ITER, ALIGN_TOL).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        for w in &out.warpings {
            for (v, s) in w.values().iter().zip(w.grid()) {
                assert!((v - s).abs() < 1e-9, "not the identity: {v} at {s}");
            }
        }
        for k in 0..profile.len() {
            assert!((out.template.kappa[k] - profile.kappa[k]).abs() < 1e-9);
            assert!((out.aligned[1].tau[k] - profile.tau[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn alignment_concentrates_a_warped_ensemble() {
        let n = 200;
        let count = 9;
        let base = wavy_profile(n);
        let profiles: Vec<ThetaProfile> = (0..count)
            .map(|i| {
                let a = -1.0 + 2.0 * i as f64 / (count - 1) as f64;
                warp_action(&base, &sample_warp(n, log_warp(a)))
            })
            .collect();
        let omega = vec![1.0 / count as f64; count];

        let mean_of = |set: &[ThetaProfile]| {
            let mut kappa = vec![0.0; n];
            let mut tau = vec![0.0; n];
            for p in set {
                for k in 0..n {
                    kappa[k] += p.kappa[k] / count as f64;
                    tau[k] += p.tau[k] / count as f64;
                }
            }
            ThetaProfile::new(base.grid.clone(), kappa, tau).unwrap()
        };
        let pre_mean = mean_of(&profiles);
        let pre: f64 = profiles.iter().map(|p| profile_dist_sq(p, &pre_mean)).sum();

        let out = align_raw_estimates(&profiles, None, &omega, ALIGN_MAX_ITER, ALIGN_TOL).unwrap();
        let post: f64 = out
            .aligned
            .iter()
            .map(|p| profile_dist_sq(p, &out.template))
            .sum();
        assert!(
            post <= 0.2 * pre,
            "dispersion only moved from {pre} to {post}"
        );
        assert!(out.iterations <= ALIGN_MAX_ITER);
        for w in &out.warpings {
            for pair in w.values().windows(2) {
                assert!(pair[1] - pair[0] >= MIN_WARP_INCREMENT);
            }
        }
    }

    #[test]
    fn permuting_profiles_permutes_the_result() {
        let n = 200;
        let base = wavy_profile(n);
        let count = 5;
        let profiles: Vec<ThetaProfile> = (0..count)
            .map(|i| {
                let a = -0.8 + 1.6 * i as f64 / (count - 1) as f64;
                warp_action(&base, &sample_warp(n, log_warp(a)))
            })
            .collect();
        let perm = [3usize, 0, 4, 1, 2];
        let permuted: Vec<ThetaProfile> = perm.iter().map(|&i| profiles[i].clone()).collect();
        let omega = vec![1.0 / count as f64; count];

        let direct =
            align_raw_estimates(&profiles, Some(2), &omega, ALIGN_MAX_ITER, ALIGN_TOL).unwrap();
        let shuffled =
            align_raw_estimates(&permuted, Some(2), &omega, ALIGN_MAX_ITER, ALIGN_TOL).unwrap();
        for (slot, &i) in perm.iter().enumerate() {
            for (a, b) in shuffled.warpings[slot]
                .values()
                .iter()
                .zip(direct.warpings[i].values())
            {
                assert!((a - b).abs() < 1e-9);
            }
        }
        for k in 0..n {
            assert!((direct.template.kappa[k] - shuffled.template.kappa[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn plain_and_phase_estimates_agree_without_phase_variation() {
        let theta = FnTheta {
            kappa: |s: f64| 2.0 + 0.8 * (2.0 * std::f64::consts::PI * s).sin(),
            tau: |s: f64| 0.5 * (2.0 * std::f64::consts::PI * s).cos(),
        };
        let grid = uniform_grid(0.0, 1.0, 80);
        let paths: Vec<FrenetPath> = (0..3)
            .map(|i| {
                let q0 = exp_so3(&Skew3::new(0.4 * i as f64, -0.2, 0.3 * i as f64));
                solve_frenet_path(&theta, q0, &grid, DEFAULT_SUBSTEP).unwrap()
            })
            .collect();
        let hp = Hyperparams::default();
        let opts = FitOptions::default();
        let phase = estimate_mean_theta_phase(&paths, hp, None, &opts).unwrap();
        let plain = estimate_mean_theta(&paths, hp, &opts).unwrap();
        assert!(phase.align_converged);
        for &s in &uniform_grid(0.0, 1.0, 101) {
            assert!((phase.theta.kappa.eval(s) - plain.kappa.eval(s)).abs() < 1e-6);
            assert!((phase.theta.tau.eval(s) - plain.tau.eval(s)).abs() < 1e-6);
        }
    }

    #[test]
    fn a_warped_ensemble_recovers_the_reference_parameter() {
        let reference = FnTheta {
            kappa: |s: f64| 10.0 * ((3.0 * s).sin() + 1.0),
            tau: |s: f64| -10.0 * (2.0 * std::f64::consts::PI * s).sin(),
        };
        let count = 8;
        let obs_grid = uniform_grid(0.0, 1.0, 100);
        let paths: Vec<FrenetPath> = (0..count)
            .map(|i| {
                let a = -1.0 + 2.0 * i as f64 / (count - 1) as f64;
                let omega = log_warp(a);
                let warped_grid: Vec<f64> = obs_grid.iter().map(|&v| omega(v)).collect();
                let solved = solve_frenet_path(
                    &reference,
                    Rot3::identity(),
                    &warped_grid,
                    DEFAULT_SUBSTEP,
                )
                .unwrap();
                FrenetPath::new(obs_grid.clone(), solved.frames().to_vec()).unwrap()
            })
            .collect();

        let hp = Hyperparams::default();
        let opts = FitOptions::default();
        let eval_grid = uniform_grid(0.0, 1.0, 201);
        let kappa_err = |fit: &ThetaSpline| {
            let sq: Vec<f64> = eval_grid
                .iter()
                .map(|&s| (fit.kappa.eval(s) - 10.0 * ((3.0 * s).sin() + 1.0)).powi(2))
                .collect();
            trapezoid(&eval_grid, &sq)
        };

        let phase = estimate_mean_theta_phase(&paths, hp, None, &opts).unwrap();
        let aligned_err = kappa_err(&phase.theta);
        let plain = estimate_mean_theta(&paths, hp, &opts).unwrap();
        let plain_err = kappa_err(&plain);

        assert!(phase.align_converged, "alignment hit the iteration cap");
        assert!(aligned_err <= 0.08, "aligned error too big: {aligned_err}");
        assert!(
            aligned_err <= plain_err / 3.0,
            "no real gain: {aligned_err} vs {plain_err}"
        );
    }

    #[test]
    fn positive_torsion_stays_positive_through_alignment() {
        let reference = FnTheta {
            kappa: |s: f64| 3.0 + (2.0 * std::f64::consts::PI * s).sin(),
            tau: |s: f64| 1.5 + 0.8 * (2.0 * std::f64::consts::PI * s).cos(),
        };
        let count = 6;
        let obs_grid = uniform_grid(0.0, 1.0, 80);
        let paths: Vec<FrenetPath> = (0..count)
            .map(|i| {
                let a = -0.8 + 1.6 * i as f64 / (count - 1) as f64;
                let omega = log_warp(a);
                let warped_grid: Vec<f64> = obs_grid.iter().map(|&v| omega(v)).collect();
                let solved = solve_frenet_path(
                    &reference,
                    Rot3::identity(),
                    &warped_grid,
                    DEFAULT_SUBSTEP,
                )
                .unwrap();
                FrenetPath::new(obs_grid.clone(), solved.frames().to_vec()).unwrap()
            })
            .collect();
        let phase =
            estimate_mean_theta_phase(&paths, Hyperparams::default(), None, &FitOptions::default())
                .unwrap();
        for &s in &uniform_grid(0.0, 1.0, 201) {
            assert!(
                phase.theta.tau.eval(s) > 0.0,
                "torsion sign flipped at {s}"
            );
        }
    }
}
