//! Mean curvature and torsion estimation from a sample of Frenet frame
//! paths.
//!
//! The estimator turns every pair of observed frames on a curve into a
//! pseudo-observation of the parameter at the pair midpoint, fits one
//! penalized spline per channel through those records, and scores
//! candidate parameters by how well their flow predicts each frame from
//! its neighbours. Two versions of that score are provided: an exact one
//! that integrates the frame ODE between the pair times, and the cheap
//! midpoint approximation the spline fit itself minimizes.

use crate::error::{Error, Result};
use crate::frenet::{
    advance, flow, reconstruct_curve, solve_frenet_path, FrenetPath, Theta, DEFAULT_SUBSTEP,
};
use crate::kernel::Kernel;
use crate::so3::{exp_so3, geodesic_dist, karcher_mean, log_so3, Rot3, Vec3};
use crate::spline::{fit_penalized, BSplineBasis, FitRecord, Spline};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use std::cmp::Ordering;

/// Fitted curvature is clamped below at this value so that frame models
/// and torsion ratios downstream never divide by zero.
pub const KAPPA_FLOOR: f64 = 1e-6;

/// Score assigned to a held-out frame whose log is numerically undefined
/// (rotation angle at pi); the supremum of the squared Frobenius log norm
/// on the rotation group.
const SATURATED_SCORE: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Prediction horizon and roughness penalties of one estimator run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Kernel horizon, as a fraction of the unit arclength.
    pub h: f64,
    pub lambda_kappa: f64,
    pub lambda_tau: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            h: 0.1,
            lambda_kappa: 1e-8,
            lambda_tau: 1e-8,
        }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::invalid(format!(
                "prediction horizon must lie in (0, 1], got {}",
                self.h
            )));
        }
        if !(self.lambda_kappa >= 0.0) || !(self.lambda_tau >= 0.0) {
            return Err(Error::invalid("penalty weights must be nonnegative"));
        }
        Ok(())
    }
}

/// Knobs shared by the fitting and scoring routines.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Interior knot count of the spline bases on `[0, 1]`.
    pub n_interior_knots: usize,
    pub kernel: Kernel,
    /// Lattice cell width for every frame ODE solve.
    pub substep: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_interior_knots: 40,
            kernel: Kernel::default(),
            substep: DEFAULT_SUBSTEP,
        }
    }
}

/// One frame pair turned into a local reading of the parameter.
///
/// `u` is the signed gap between the pair times, `v` their midpoint. `r1`
/// and `r2` estimate curvature and torsion at `v`; `r3` reads the skew
/// slot that vanishes on exact Frenet data and is kept as a frame noise
/// diagnostic, never fitted.
#[derive(Debug, Clone, Copy)]
pub struct PseudoObs {
    pub curve: usize,
    pub u: f64,
    pub v: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub w: f64,
}

/// All materialized pseudo-observations plus drop diagnostics.
#[derive(Debug, Clone, Default)]
pub struct PseudoObsSet {
    pub records: Vec<PseudoObs>,
    /// Ordered pairs whose frame log was undefined (angle at pi).
    pub dropped: usize,
}

/// Extracts one pseudo-observation per ordered frame pair closer than `h`.
///
/// For the pair `(s, t)` the log of `Q(t)^T Q(s)` scaled by `-1/(t - s)`
/// reads the parameter near the midpoint `v = (s + t)/2`, and the record
/// carries the weight `(2/n^2) K_h(u) u^2` that makes the penalized spline
/// fit of the records minimize the midpoint criterion. Swapping the pair
/// order gives the same reading with `u` negated, so mirrored records are
/// materialized directly.
pub fn raw_log_increments(
    paths: &[FrenetPath],
    h: f64,
    kernel: Kernel,
) -> Result<PseudoObsSet> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::invalid(format!(
            "prediction horizon must lie in (0, 1], got {h}"
        )));
    }
    for path in paths {
        if path.len() < 3 {
            return Err(Error::invalid(
                "pseudo-observations need at least 3 frames per path",
            ));
        }
        let s = path.grid();
        if s[0] < -1e-9 || s[s.len() - 1] > 1.0 + 1e-9 {
            return Err(Error::invalid(
                "paths must be parameterized on the unit interval",
            ));
        }
    }

    let per_path: Vec<(Vec<PseudoObs>, usize)> = paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let s = path.grid();
            let q = path.frames();
            let n = s.len();
            let base_w = 2.0 / (n * n) as f64;
            let mut records = Vec::new();
            let mut dropped = 0usize;
            for j in 0..n {
                for t in (j + 1)..n {
                    let u = s[t] - s[j];
                    if u > h {
                        break;
                    }
                    let m = q[t].transpose() * q[j];
                    let l = match log_so3(&m) {
                        Ok(l) => l,
                        Err(_) => {
                            dropped += 2;
                            continue;
                        }
                    };
                    let r = l.scale(-1.0 / u).vee();
                    let v = 0.5 * (s[t] + s[j]);
                    let w = base_w * kernel.scaled(u, h) * u * u;
                    for signed_u in [u, -u] {
                        records.push(PseudoObs {
                            curve: i,
                            u: signed_u,
                            v,
                            r1: r.x,
                            r2: r.y,
                            r3: r.z,
                            w,
                        });
                    }
                }
            }
            (records, dropped)
        })
        .collect();

    let mut set = PseudoObsSet::default();
    for (records, dropped) in per_path {
        set.records.extend(records);
        set.dropped += dropped;
    }
    Ok(set)
}

/// A fitted parameter: one spline per channel on `[0, 1]`.
///
/// Curvature evaluations are clamped at [`KAPPA_FLOOR`]; the raw spline
/// stays accessible through the field.
#[derive(Debug, Clone)]
pub struct ThetaSpline {
    pub kappa: Spline,
    pub tau: Spline,
}

impl Theta for ThetaSpline {
    fn kappa(&self, s: f64) -> f64 {
        self.kappa.eval(s).max(KAPPA_FLOOR)
    }
    fn tau(&self, s: f64) -> f64 {
        self.tau.eval(s)
    }
}

/// Fits the two channels of a pseudo-observation set independently by
/// penalized weighted least squares on a clamped cubic basis.
pub fn fit_theta_splines(
    set: &PseudoObsSet,
    hp: Hyperparams,
    opts: &FitOptions,
) -> Result<ThetaSpline> {
    hp.validate()?;
    let basis = BSplineBasis::clamped_cubic(0.0, 1.0, opts.n_interior_knots)?;
    let kappa_records: Vec<FitRecord> = set
        .records
        .iter()
        .map(|r| FitRecord {
            x: r.v,
            y: r.r1,
            w: r.w,
        })
        .collect();
    let tau_records: Vec<FitRecord> = set
        .records
        .iter()
        .map(|r| FitRecord {
            x: r.v,
            y: r.r2,
            w: r.w,
        })
        .collect();
    let kappa = fit_penalized(&basis, &kappa_records, hp.lambda_kappa)?;
    let tau = fit_penalized(&basis, &tau_records, hp.lambda_tau)?;
    Ok(ThetaSpline { kappa, tau })
}

/// Pseudo-observations then spline fits; the whole estimator in one call.
pub fn estimate_mean_theta(
    paths: &[FrenetPath],
    hp: Hyperparams,
    opts: &FitOptions,
) -> Result<ThetaSpline> {
    let set = raw_log_increments(paths, hp.h, opts.kernel)?;
    fit_theta_splines(&set, hp, opts)
}

/// The roughness penalty shared by both self-prediction criteria.
pub fn penalty_value(theta: &ThetaSpline, hp: Hyperparams) -> f64 {
    hp.lambda_kappa * theta.kappa.bending_energy() + hp.lambda_tau * theta.tau.bending_energy()
}

fn criterion_core<T: Theta + Sync>(
    theta: &T,
    paths: &[FrenetPath],
    h: f64,
    opts: &FitOptions,
    exact: bool,
) -> Result<(f64, usize)> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::invalid(format!(
            "prediction horizon must lie in (0, 1], got {h}"
        )));
    }
    let per_path: Vec<(f64, usize)> = paths
        .par_iter()
        .map(|path| {
            let s = path.grid();
            let q = path.frames();
            let n = s.len();
            let norm = 1.0 / (n * n) as f64;
            let steps: Vec<Rot3> = if exact {
                (1..n)
                    .map(|k| flow(theta, s[k - 1], s[k], opts.substep))
                    .collect()
            } else {
                Vec::new()
            };
            let mut acc = 0.0;
            let mut dropped = 0usize;
            for j in 0..n {
                let mut fwd = Rot3::identity();
                for t in (j + 1)..n {
                    let u = s[t] - s[j];
                    if u > h {
                        break;
                    }
                    let predicted = if exact {
                        fwd = &fwd * &steps[t - 1];
                        fwd
                    } else {
                        exp_so3(&theta.coeff(0.5 * (s[j] + s[t])).scale(u))
                    };
                    let m = (q[t].transpose() * q[j]) * predicted;
                    match log_so3(&m) {
                        Ok(l) => {
                            let fro2 = l.frobenius_norm().powi(2);
                            // The reversed pair contributes the same value,
                            // so forward pairs are counted twice.
                            acc += 2.0 * norm * opts.kernel.scaled(u, h) * fro2;
                        }
                        Err(_) => dropped += 2,
                    }
                }
            }
            (acc, dropped)
        })
        .collect();
    let mut total = 0.0;
    let mut dropped = 0;
    for (acc, d) in per_path {
        total += acc;
        dropped += d;
    }
    Ok((total, dropped))
}

/// Self-prediction score of `theta` on the observed frame pairs, with the
/// predicted transport integrated by the frame ODE solver between the
/// pair times. Returns the score and the count of dropped pairs.
pub fn criterion_exact<T: Theta + Sync>(
    theta: &T,
    paths: &[FrenetPath],
    h: f64,
    opts: &FitOptions,
) -> Result<(f64, usize)> {
    criterion_core(theta, paths, h, opts, true)
}

/// Same score with the transport replaced by a single exponential of the
/// midpoint coefficient; agrees with [`criterion_exact`] to third order
/// in the horizon.
pub fn criterion_approx<T: Theta + Sync>(
    theta: &T,
    paths: &[FrenetPath],
    h: f64,
    opts: &FitOptions,
) -> Result<(f64, usize)> {
    criterion_core(theta, paths, h, opts, false)
}

/// Mean frame path and mean curve for a parameter, anchored at the
/// Karcher mean of the initial frames and the average initial point.
pub fn mean_shape<T: Theta + ?Sized>(
    theta: &T,
    initial_frames: &[Rot3],
    initial_points: &[Vec3],
    grid: &[f64],
    substep: f64,
) -> Result<(FrenetPath, Vec<Vec3>)> {
    if initial_frames.is_empty() {
        return Err(Error::invalid("mean shape needs at least one initial frame"));
    }
    let q0 = karcher_mean(initial_frames, 1e-12, 200)?;
    let x0 = if initial_points.is_empty() {
        Vec3::zeros()
    } else {
        initial_points.iter().sum::<Vec3>() / initial_points.len() as f64
    };
    let path = solve_frenet_path(theta, q0, grid, substep)?;
    let curve = reconstruct_curve(theta, q0, x0, grid, substep)?;
    Ok((path, curve))
}

/// A full estimation run: fitted parameter, mean path and curve, and the
/// penalized exact criterion value at the fit.
#[derive(Debug, Clone)]
pub struct MeanShapeResult {
    pub theta: ThetaSpline,
    pub mean_path: FrenetPath,
    pub mean_curve: Vec<Vec3>,
    pub criterion_value: f64,
    pub hyperparams: Hyperparams,
    /// Ordered frame pairs dropped during pseudo-observation extraction.
    pub dropped: usize,
}

/// Runs the estimator end to end on a sample of paths and assembles the
/// mean shape on `grid`, anchored at the mean of the paths' first frames
/// and of `initial_points` (the origin when empty).
pub fn fit_mean_shape(
    paths: &[FrenetPath],
    initial_points: &[Vec3],
    grid: &[f64],
    hp: Hyperparams,
    opts: &FitOptions,
) -> Result<MeanShapeResult> {
    let set = raw_log_increments(paths, hp.h, opts.kernel)?;
    let dropped = set.dropped;
    let theta = fit_theta_splines(&set, hp, opts)?;
    let firsts: Vec<Rot3> = paths.iter().map(|p| p.frames()[0]).collect();
    let (mean_path, mean_curve) = mean_shape(&theta, &firsts, initial_points, grid, opts.substep)?;
    let (data_term, _) = criterion_exact(&theta, paths, hp.h, opts)?;
    Ok(MeanShapeResult {
        criterion_value: data_term + penalty_value(&theta, hp),
        theta,
        mean_path,
        mean_curve,
        hyperparams: hp,
        dropped,
    })
}

/// One row of a cross-validation table.
#[derive(Debug, Clone, Copy)]
pub struct CvEntry {
    pub hyperparams: Hyperparams,
    pub score: f64,
}

/// K-fold cross-validation over a candidate grid of hyperparameters.
///
/// All frame indices `(curve, position)` are shuffled once and dealt
/// round-robin into `k` folds. For each candidate and fold the estimator
/// is fit on the retained frames, every curve is re-predicted by flowing
/// from its earliest retained frame across its whole grid, and held-out
/// frames score the squared Frobenius log distance to their prediction
/// (saturated at its supremum when the log is undefined). Ties between
/// candidates prefer the smoother fit: larger curvature penalty, then
/// larger torsion penalty, then larger horizon. The same seed always
/// yields the same folds and the same selection.
pub fn cross_validate<R: Rng + ?Sized>(
    paths: &[FrenetPath],
    candidates: &[Hyperparams],
    k: usize,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<(Hyperparams, Vec<CvEntry>)> {
    if candidates.is_empty() {
        return Err(Error::invalid("cross-validation needs at least one candidate"));
    }
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least two folds"));
    }
    for path in paths {
        if path.len() < k {
            return Err(Error::invalid(format!(
                "every path needs at least {k} frames for {k}-fold cross-validation"
            )));
        }
    }

    let mut all_indices: Vec<(usize, usize)> = paths
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.len()).map(move |j| (i, j)))
        .collect();
    all_indices.shuffle(rng);
    let mut fold_of: Vec<Vec<usize>> = paths.iter().map(|p| vec![0; p.len()]).collect();
    for (pos, &(i, j)) in all_indices.iter().enumerate() {
        fold_of[i][j] = pos % k;
    }
    // Fewer than 3 retained frames cannot form pseudo-observations, so a
    // fold that concentrates a curve's frames invalidates the whole split.
    for f in 0..k {
        for (i, folds) in fold_of.iter().enumerate() {
            if folds.iter().filter(|&&g| g != f).count() < 3 {
                return Err(Error::FoldTooSmall { fold: f, curve: i });
            }
        }
    }

    let scores: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|hp| {
            hp.validate()?;
            let mut total = 0.0;
            for f in 0..k {
                let train: Vec<FrenetPath> = paths
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let keep: Vec<bool> =
                            fold_of[i].iter().map(|&g| g != f).collect();
                        p.subset(&keep)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let theta = estimate_mean_theta(&train, *hp, opts)?;
                for (i, path) in paths.iter().enumerate() {
                    let s = path.grid();
                    let frames = path.frames();
                    let j0 = fold_of[i]
                        .iter()
                        .position(|&g| g != f)
                        .expect("retained counts were checked above");
                    let mut qhat = vec![Rot3::identity(); s.len()];
                    qhat[j0] = frames[j0];
                    for j in (j0 + 1)..s.len() {
                        qhat[j] = advance(&theta, qhat[j - 1], s[j - 1], s[j], opts.substep);
                    }
                    for j in (0..j0).rev() {
                        qhat[j] = advance(&theta, qhat[j + 1], s[j + 1], s[j], opts.substep);
                    }
                    for j in 0..s.len() {
                        if fold_of[i][j] == f {
                            total += match geodesic_dist(&frames[j], &qhat[j]) {
                                Ok(d) => (d * d).min(SATURATED_SCORE),
                                Err(_) => SATURATED_SCORE,
                            };
                        }
                    }
                }
            }
            Ok(total)
        })
        .collect();

    let mut table = Vec::with_capacity(candidates.len());
    for (hp, score) in candidates.iter().zip(scores) {
        table.push(CvEntry {
            hyperparams: *hp,
            score: score?,
        });
    }
    let best = table
        .iter()
        .min_by(|a, b| {
            let (x, y) = (&a.hyperparams, &b.hyperparams);
            a.score
                .partial_cmp(&b.score)
                .unwrap_or(Ordering::Equal)
                .then(
                    y.lambda_kappa
                        .partial_cmp(&x.lambda_kappa)
                        .unwrap_or(Ordering::Equal),
                )
                .then(
                    y.lambda_tau
                        .partial_cmp(&x.lambda_tau)
                        .unwrap_or(Ordering::Equal),
                )
                .then(y.h.partial_cmp(&x.h).unwrap_or(Ordering::Equal))
        })
        .expect("candidate table is nonempty");
    Ok((best.hyperparams, table))
}
