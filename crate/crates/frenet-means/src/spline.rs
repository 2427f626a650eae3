//! Clamped cubic B-splines and curvature-penalized least-squares fitting.
//!
//! The fitter solves
//!
//! ```text
//! min_f  sum_i w_i (y_i - f(x_i))^2 + lambda * integral (f'')^2
//! ```
//!
//! over the spline space. Moderate penalties go through normal equations and
//! Cholesky; once the penalty block dominates the data block by more than
//! five orders of magnitude the solver switches to a QR factorization of the
//! stacked system, which stays accurate in the `lambda -> infinity` limit
//! where the fit collapses onto the affine functions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const DEGREE: usize = 3;

/// Ratio of penalty to data diagonal scale beyond which the stacked QR
/// solver replaces the normal equations.
const NORMAL_EQUATION_SCALE_LIMIT: f64 = 1e5;

/// Tolerance for accepting evaluation points marginally outside the domain.
const DOMAIN_SLACK: f64 = 1e-9;

/// One weighted data point for [`fit_penalized`].
#[derive(Debug, Clone, Copy)]
pub struct FitRecord {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

/// Clamped cubic B-spline basis with uniform interior knots on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    knots: Vec<f64>,
    n_basis: usize,
}

impl BSplineBasis {
    pub fn clamped_cubic(a: f64, b: f64, n_interior: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid(format!(
                "invalid spline domain [{a}, {b}]"
            )));
        }
        let mut knots = Vec::with_capacity(n_interior + 2 * (DEGREE + 1));
        knots.extend(std::iter::repeat(a).take(DEGREE + 1));
        let step = (b - a) / (n_interior + 1) as f64;
        for i in 1..=n_interior {
            knots.push(a + step * i as f64);
        }
        knots.extend(std::iter::repeat(b).take(DEGREE + 1));
        Ok(BSplineBasis {
            n_basis: n_interior + DEGREE + 1,
            knots,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[DEGREE], self.knots[self.n_basis])
    }

    fn n_spans(&self) -> usize {
        self.n_basis - DEGREE
    }

    fn check_domain(&self, x: f64) -> Result<f64> {
        let (a, b) = self.domain();
        let slack = DOMAIN_SLACK * (b - a).max(1.0);
        if x < a - slack || x > b + slack || !x.is_finite() {
            return Err(Error::invalid(format!(
                "point {x} outside the spline domain [{a}, {b}]"
            )));
        }
        Ok(x.clamp(a, b))
    }

    fn find_span(&self, x: f64) -> usize {
        if x >= self.knots[self.n_basis] {
            return self.n_basis - 1;
        }
        if x <= self.knots[DEGREE] {
            return DEGREE;
        }
        let mut lo = DEGREE;
        let mut hi = self.n_basis;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Values of the four basis functions that are nonzero at `x`, together
    /// with the index of the first of them.
    pub fn eval_nonzero(&self, x: f64) -> (usize, [f64; 4]) {
        let span = self.find_span(x);
        let mut values = [0.0f64; 4];
        let mut left = [0.0f64; 4];
        let mut right = [0.0f64; 4];
        values[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        (span - DEGREE, values)
    }

    /// Values, first and second derivatives of the four nonzero basis
    /// functions at `x`.
    pub fn eval_nonzero_ders(&self, x: f64) -> (usize, [[f64; 4]; 3]) {
        let span = self.find_span(x);
        let p = DEGREE;
        let mut ndu = [[0.0f64; 4]; 4];
        let mut left = [0.0f64; 4];
        let mut right = [0.0f64; 4];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = [[0.0f64; 4]; 3];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut work = [[0.0f64; 4]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            work[0] = [1.0, 0.0, 0.0, 0.0];
            work[1] = [0.0; 4];
            for k in 1..=2usize {
                let mut d = 0.0;
                let rk = r as i64 - k as i64;
                let pk = p - k;
                if r >= k {
                    work[s2][0] = work[s1][0] / ndu[pk + 1][rk as usize];
                    d = work[s2][0] * ndu[rk as usize][pk];
                }
                let j_lo = if rk >= -1 { 1 } else { -rk };
                let j_hi = if r as i64 - 1 <= pk as i64 {
                    k as i64 - 1
                } else {
                    p as i64 - r as i64
                };
                let mut j = j_lo;
                while j <= j_hi {
                    let ju = j as usize;
                    work[s2][ju] =
                        (work[s1][ju] - work[s1][ju - 1]) / ndu[pk + 1][(rk + j) as usize];
                    d += work[s2][ju] * ndu[(rk + j) as usize][pk];
                    j += 1;
                }
                if r <= pk {
                    work[s2][k] = -work[s1][k - 1] / ndu[pk + 1][r];
                    d += work[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for der in ders.iter_mut().skip(1) {
            for v in der.iter_mut() {
                *v *= factor;
            }
            factor *= (p - 1) as f64;
        }
        (span - DEGREE, ders)
    }

    /// Two-point Gauss nodes and weights per knot span; exact for the
    /// piecewise-quadratic integrand `B'' B''`.
    fn gauss_nodes(&self) -> Vec<(f64, f64)> {
        let half_offset = 0.5 / 3.0f64.sqrt();
        let mut nodes = Vec::with_capacity(2 * self.n_spans());
        for s in 0..self.n_spans() {
            let l = self.knots[DEGREE + s];
            let r = self.knots[DEGREE + s + 1];
            let mid = 0.5 * (l + r);
            let len = r - l;
            nodes.push((mid - half_offset * len, 0.5 * len));
            nodes.push((mid + half_offset * len, 0.5 * len));
        }
        nodes
    }

    fn penalty_matrix(&self) -> DMatrix<f64> {
        let k = self.n_basis;
        let mut pen = DMatrix::zeros(k, k);
        for (x, w) in self.gauss_nodes() {
            let (first, ders) = self.eval_nonzero_ders(x);
            for a in 0..4 {
                for b in 0..4 {
                    pen[(first + a, first + b)] += w * ders[2][a] * ders[2][b];
                }
            }
        }
        pen
    }
}

/// A cubic spline function, the result of [`fit_penalized`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spline {
    basis: BSplineBasis,
    coeffs: Vec<f64>,
}

impl Spline {
    pub fn new(basis: BSplineBasis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.n_basis() {
            return Err(Error::invalid(format!(
                "{} coefficients for a basis of dimension {}",
                coeffs.len(),
                basis.n_basis()
            )));
        }
        Ok(Spline { basis, coeffs })
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = match self.basis.check_domain(x) {
            Ok(x) => x,
            Err(_) => {
                let (a, b) = self.basis.domain();
                x.clamp(a, b)
            }
        };
        let (first, values) = self.basis.eval_nonzero(x);
        (0..4).map(|j| values[j] * self.coeffs[first + j]).sum()
    }

    pub fn eval_d2(&self, x: f64) -> f64 {
        let (a, b) = self.basis.domain();
        let x = x.clamp(a, b);
        let (first, ders) = self.basis.eval_nonzero_ders(x);
        (0..4).map(|j| ders[2][j] * self.coeffs[first + j]).sum()
    }

    /// `integral (f'')^2` over the domain.
    pub fn bending_energy(&self) -> f64 {
        self.basis
            .gauss_nodes()
            .into_iter()
            .map(|(x, w)| {
                let d2 = self.eval_d2(x);
                w * d2 * d2
            })
            .sum()
    }
}

/// Weighted curvature-penalized least squares over the spline space.
///
/// Records with zero weight are ignored. Fails with
/// [`Error::RankDeficient`] when fewer weighted records than basis functions
/// remain, or when the linear algebra detects an unresolvable direction.
pub fn fit_penalized(basis: &BSplineBasis, records: &[FitRecord], lambda: f64) -> Result<Spline> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "penalty weight must be finite and >= 0, got {lambda}"
        )));
    }
    let k = basis.n_basis();
    let active: Vec<&FitRecord> = records.iter().filter(|r| r.w > 0.0).collect();
    if active.len() < k {
        return Err(Error::RankDeficient {
            detail: format!(
                "{} weighted records cannot determine {} spline coefficients",
                active.len(),
                k
            ),
        });
    }
    for r in &active {
        basis.check_domain(r.x)?;
        if !r.y.is_finite() || !r.w.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite record (x = {}, y = {}, w = {})",
                r.x, r.y, r.w
            )));
        }
    }

    let pen = basis.penalty_matrix();

    let mut normal = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for r in &active {
        let (first, values) = basis.eval_nonzero(r.x);
        for a in 0..4 {
            rhs[first + a] += r.w * values[a] * r.y;
            for b in 0..4 {
                normal[(first + a, first + b)] += r.w * values[a] * values[b];
            }
        }
    }

    let data_scale = (0..k).map(|i| normal[(i, i)]).fold(0.0f64, f64::max);
    let pen_scale = lambda * (0..k).map(|i| pen[(i, i)]).fold(0.0f64, f64::max);
    if data_scale <= 0.0 {
        return Err(Error::RankDeficient {
            detail: "all record weights vanish".to_string(),
        });
    }

    let coeffs = if pen_scale <= NORMAL_EQUATION_SCALE_LIMIT * data_scale {
        let system = normal + pen * lambda;
        match nalgebra::linalg::Cholesky::new(system) {
            Some(chol) => chol.solve(&rhs),
            None => solve_stacked_qr(basis, &active, lambda)?,
        }
    } else {
        solve_stacked_qr(basis, &active, lambda)?
    };

    Spline::new(basis.clone(), coeffs.iter().copied().collect())
}

/// Least-squares solve of the stacked system `[sqrt(w) B; sqrt(lambda g) B'']`.
fn solve_stacked_qr(
    basis: &BSplineBasis,
    active: &[&FitRecord],
    lambda: f64,
) -> Result<DVector<f64>> {
    let k = basis.n_basis();
    let gauss = basis.gauss_nodes();
    let rows = active.len() + gauss.len();
    let mut a = DMatrix::zeros(rows, k);
    let mut b = DVector::zeros(rows);
    for (i, r) in active.iter().enumerate() {
        let sw = r.w.sqrt();
        let (first, values) = basis.eval_nonzero(r.x);
        for j in 0..4 {
            a[(i, first + j)] = sw * values[j];
        }
        b[i] = sw * r.y;
    }
    for (g, &(x, w)) in gauss.iter().enumerate() {
        let row = active.len() + g;
        let scale = (lambda * w).sqrt();
        let (first, ders) = basis.eval_nonzero_ders(x);
        for j in 0..4 {
            a[(row, first + j)] = scale * ders[2][j];
        }
    }

    let qr = a.qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    let diag_min = (0..k).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(diag_min > 1e-12 * diag_max) {
        return Err(Error::RankDeficient {
            detail: format!(
                "stacked design has relative pivot {:.3e}",
                diag_min / diag_max
            ),
        });
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb).ok_or(Error::RankDeficient {
        detail: "triangular back-substitution failed".to_string(),
    })
}
