//! Monotone warping paths on a uniform lattice, by dynamic programming.
//!
//! The solver minimizes a discretized residual between a target profile
//! and a slope-scaled, reparametrized source profile. Lattice paths move
//! only up and right with slopes from a fixed rational menu, so every
//! candidate warp is strictly increasing. The caller is expected to
//! refine the quantized result against its own evaluation of the
//! objective.

use nalgebra::DMatrix;

/// Lattice moves as (domain step, value step) pairs. Slopes range over
/// {1/3, 1/2, 2/3, 1, 3/2, 2, 3}; the unit diagonal is listed first so it
/// wins cost ties.
const MOVES: [(usize, usize); 7] = [(1, 1), (1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1)];

/// How the warp slope scales the reparametrized source values.
#[derive(Debug, Clone, Copy)]
pub(crate) enum SlopeAction {
    /// Multiply by the slope itself (density-like transformation).
    Derivative,
    /// Multiply by the square root of the slope (norm-preserving
    /// transformation of square-root velocities).
    SqrtDerivative,
}

impl SlopeAction {
    fn factor(self, slope: f64) -> f64 {
        match self {
            SlopeAction::Derivative => slope,
            SlopeAction::SqrtDerivative => slope.sqrt(),
        }
    }
}

/// Interpolates row `c` of `m` at fractional column `g`.
fn row_interp(m: &DMatrix<f64>, c: usize, g: f64) -> f64 {
    let last = m.ncols() - 1;
    let g = g.clamp(0.0, last as f64);
    let j = (g.floor() as usize).min(last - 1);
    let t = g - j as f64;
    m[(c, j)] * (1.0 - t) + m[(c, j + 1)] * t
}

/// Squared residual of the slope-scaled source against the target at
/// domain node `i` and source position `g`, both in index units.
fn integrand(
    target: &DMatrix<f64>,
    source: &DMatrix<f64>,
    i: usize,
    g: f64,
    scale: f64,
) -> f64 {
    let mut acc = 0.0;
    for c in 0..target.nrows() {
        let d = target[(c, i)] - row_interp(source, c, g) * scale;
        acc += d * d;
    }
    acc
}

/// Trapezoid cost of the straight segment from `(i0, g0)` to `(i1, g1)`,
/// accumulated over the unit cells it crosses.
fn segment_cost(
    target: &DMatrix<f64>,
    source: &DMatrix<f64>,
    i0: usize,
    g0: f64,
    i1: usize,
    g1: f64,
    ds: f64,
    action: SlopeAction,
) -> f64 {
    let slope = (g1 - g0) / (i1 - i0) as f64;
    let scale = action.factor(slope);
    let mut acc = 0.0;
    for t in 0..(i1 - i0) {
        let ga = g0 + slope * t as f64;
        let gb = ga + slope;
        let fa = integrand(target, source, i0 + t, ga, scale);
        let fb = integrand(target, source, i0 + t + 1, gb, scale);
        acc += 0.5 * (fa + fb) * ds;
    }
    acc
}

/// Minimizes the discretized residual between `target` and the warped,
/// slope-scaled `source` over monotone lattice paths. Rows are channels,
/// columns sit on a uniform grid over `[0, 1]`. Returns one warp value
/// per column, in `[0, 1]`, linear across multi-column moves.
pub(crate) fn solve_monotone_warp(target: &DMatrix<f64>, source: &DMatrix<f64>) -> Vec<f64> {
    solve_monotone_warp_with(target, source, SlopeAction::Derivative)
}

/// As [`solve_monotone_warp`], with the slope acting through `action`.
pub(crate) fn solve_monotone_warp_with(
    target: &DMatrix<f64>,
    source: &DMatrix<f64>,
    action: SlopeAction,
) -> Vec<f64> {
    assert_eq!(target.nrows(), source.nrows());
    assert_eq!(target.ncols(), source.ncols());
    let m = target.ncols();
    assert!(m >= 4, "warp lattice needs at least four columns");
    let ds = 1.0 / (m - 1) as f64;

    let mut dist = vec![f64::INFINITY; m * m];
    let mut step = vec![u8::MAX; m * m];
    dist[0] = 0.0;
    for a in 0..m {
        for b in 0..m {
            if a == 0 && b == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut best_move = u8::MAX;
            for (mv, &(da, db)) in MOVES.iter().enumerate() {
                if a < da || b < db {
                    continue;
                }
                let prev = dist[(a - da) * m + (b - db)];
                if !prev.is_finite() {
                    continue;
                }
                let cand = prev
                    + segment_cost(
                        target,
                        source,
                        a - da,
                        (b - db) as f64,
                        a,
                        b as f64,
                        ds,
                        action,
                    );
                if cand < best {
                    best = cand;
                    best_move = mv as u8;
                }
            }
            dist[a * m + b] = best;
            step[a * m + b] = best_move;
        }
    }

    let mut values = vec![0.0; m];
    let (mut a, mut b) = (m - 1, m - 1);
    while a > 0 || b > 0 {
        let (da, db) = MOVES[step[a * m + b] as usize];
        let slope = db as f64 / da as f64;
        for t in 1..=da {
            values[a - da + t] = (b - db) as f64 + slope * t as f64;
        }
        a -= da;
        b -= db;
    }
    values[0] = 0.0;

    for v in values.iter_mut() {
        *v /= (m - 1) as f64;
    }
    values
}
