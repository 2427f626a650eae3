//! Frames and mean geodesic curvature for curves on the unit sphere.
//!
//! A unit-speed spherical curve carries the moving frame (point, tangent,
//! normal) whose columns obey the same left-matrix ODE as the Frenet frame,
//! with the first generator slot pinned at one by the sphere constraint.
//! This module builds such frames from sampled points, feeds them to the
//! frame-pair estimator so the pinned slot doubles as a per-curve length
//! reading, and reconstructs mean curves with the shared lattice solver.

use crate::error::{Error, Result};
use crate::estimator::{raw_log_increments, FitOptions, Hyperparams};
use crate::frenet::{solve_frenet_path, FrenetPath, Theta};
use crate::interp::cumulative_trapezoid;
use crate::kernel::Kernel;
use crate::localpoly::local_poly_derivatives;
use crate::so3::{project_so3, Mat3, Rot3, Skew3, Vec3};
use crate::spline::{fit_penalized, BSplineBasis, FitRecord, Spline};

/// Largest tolerated deviation of a radius-normalized sample from unit norm.
pub const SPHERE_NORM_TOL: f64 = 1e-3;

/// Polynomial degree of the local tangent fits.
const FIT_DEGREE: usize = 3;

/// Tangential speed below which arclength reparametrization is refused.
const MIN_TANGENT_SPEED: f64 = 1e-8;

/// Left generator of the spherical frame flow at geodesic curvature `kg`.
///
/// The unit in the first slot encodes the sphere constraint; `kg = 0`
/// yields the generator of a great circle traversed at unit speed.
pub fn spherical_a(kg: f64) -> Skew3 {
    Skew3::new(1.0, kg, 0.0)
}

/// Oriented frames of one spherical curve over normalized arclength.
///
/// Each frame column triple is (point, unit tangent, point x tangent), so
/// the curve itself is recovered from the first columns. Structurally this
/// is a Frenet path whose curvature slot reads the curve length.
#[derive(Debug, Clone)]
pub struct SphericalFramePath {
    inner: FrenetPath,
}

impl SphericalFramePath {
    /// Wraps frames attached to a strictly increasing grid.
    pub fn new(grid: Vec<f64>, frames: Vec<Rot3>) -> Result<Self> {
        Ok(SphericalFramePath {
            inner: FrenetPath::new(grid, frames)?,
        })
    }

    pub fn grid(&self) -> &[f64] {
        self.inner.grid()
    }

    pub fn frames(&self) -> &[Rot3] {
        self.inner.frames()
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    /// The underlying frame path, for estimator plumbing.
    pub fn as_frenet(&self) -> &FrenetPath {
        &self.inner
    }

    /// Curve points, read off the first frame columns.
    pub fn points(&self) -> Vec<Vec3> {
        self.frames().iter().map(|q| q.column(0)).collect()
    }
}

/// Mean geodesic curvature over normalized arclength, plus the curve scale.
#[derive(Debug, Clone)]
pub struct GeodesicCurvature {
    /// Geodesic curvature as a function of normalized arclength.
    pub kg: Spline,
    /// Average of the per-curve length readings.
    pub length: f64,
    /// Weighted RMS deviation of the pinned unit slot from one.
    ///
    /// The slot is known exactly and never fitted; its spread is a data
    /// quality diagnostic for the supplied frames.
    pub unit_slot_rms: f64,
}

/// Builds spherical frames from curve samples `points[j]` at `params[j]`.
///
/// The common radius is taken as the mean point norm and divided out; any
/// sample further than `SPHERE_NORM_TOL` from the unit sphere after that is
/// refused. Tangents come from local cubic fits of the normalized
/// coordinates, projected onto the tangent plane of the (exactly
/// renormalized) point, and the grid is reparametrized to arclength scaled
/// to `[0, 1]`.
pub fn spherical_frames(
    params: &[f64],
    points: &[Vec3],
    bandwidth: f64,
) -> Result<SphericalFramePath> {
    if params.len() != points.len() {
        return Err(Error::invalid(format!(
            "{} parameters attached to {} points",
            params.len(),
            points.len()
        )));
    }
    if params.len() < FIT_DEGREE + 2 {
        return Err(Error::invalid(format!(
            "{} samples are too few for local tangent fits",
            params.len()
        )));
    }

    let radius = points.iter().map(|p| p.norm()).sum::<f64>() / points.len() as f64;
    if !(radius > 0.0) {
        return Err(Error::invalid(
            "cannot infer a sphere radius from points at the origin",
        ));
    }
    let scaled: Vec<Vec3> = points.iter().map(|p| p / radius).collect();
    for (j, q) in scaled.iter().enumerate() {
        let dev = (q.norm() - 1.0).abs();
        if dev > SPHERE_NORM_TOL {
            return Err(Error::invalid(format!(
                "point {j} lies {dev:.2e} off the unit sphere after radius normalization"
            )));
        }
    }

    let coords: [Vec<f64>; 3] = [
        scaled.iter().map(|p| p.x).collect(),
        scaled.iter().map(|p| p.y).collect(),
        scaled.iter().map(|p| p.z).collect(),
    ];
    let kernel = Kernel::default();
    let range = params[params.len() - 1] - params[0];

    let mut frames = Vec::with_capacity(params.len());
    let mut speeds = Vec::with_capacity(params.len());
    for (j, &t0) in params.iter().enumerate() {
        // Edge windows on sparse grids may hold too few points for the
        // degree; widen locally until the fit is determined.
        let mut bw = bandwidth;
        loop {
            let count = params.iter().filter(|&&t| ((t - t0) / bw).abs() < 1.0).count();
            if count >= FIT_DEGREE + 3 || bw > 2.0 * range {
                break;
            }
            bw *= 1.5;
        }
        let mut velocity = Vec3::zeros();
        for (c, ys) in coords.iter().enumerate() {
            let ders = local_poly_derivatives(params, ys, t0, bw, FIT_DEGREE, kernel, j)?;
            velocity[c] = ders[1];
        }
        let alpha = scaled[j].normalize();
        let tangent = velocity - alpha.scale(velocity.dot(&alpha));
        let speed = tangent.norm();
        if speed < MIN_TANGENT_SPEED {
            return Err(Error::DegenerateSpeed {
                t: t0,
                min_speed: MIN_TANGENT_SPEED,
            });
        }
        let beta = tangent / speed;
        let gamma = alpha.cross(&beta);
        frames.push(project_so3(&Mat3::from_columns(&[alpha, beta, gamma]))?);
        speeds.push(speed);
    }

    let arc = cumulative_trapezoid(params, &speeds);
    let length = *arc.last().expect("nonempty grid");
    if !(length > 0.0) {
        return Err(Error::DegenerateSpeed {
            t: params[0],
            min_speed: MIN_TANGENT_SPEED,
        });
    }
    let s: Vec<f64> = arc.iter().map(|&a| a / length).collect();
    for j in 1..s.len() {
        if s[j] <= s[j - 1] {
            return Err(Error::DegenerateSpeed {
                t: params[j],
                min_speed: MIN_TANGENT_SPEED,
            });
        }
    }
    SphericalFramePath::new(s, frames)
}

/// Fits the mean geodesic curvature of a sample of spherical frame paths.
///
/// Frame-pair records read the pair (length, length x geodesic curvature)
/// because the paths live on normalized arclength. The length slot is known
/// to be constant per curve, so its weighted mean serves as the per-curve
/// length estimate and the remaining slot, divided by that length, is the
/// only one spline-fitted (under `lambda_tau`). The deviation of the
/// normalized length slot from one is reported as `unit_slot_rms`, never
/// corrected.
pub fn estimate_mean_kg(
    paths: &[SphericalFramePath],
    hp: Hyperparams,
    opts: &FitOptions,
) -> Result<GeodesicCurvature> {
    if paths.is_empty() {
        return Err(Error::invalid(
            "cannot estimate geodesic curvature from zero paths",
        ));
    }
    let frenet: Vec<FrenetPath> = paths.iter().map(|p| p.inner.clone()).collect();
    let obs = raw_log_increments(&frenet, hp.h, opts.kernel)?;

    let n = paths.len();
    let mut w_sum = vec![0.0; n];
    let mut r1_sum = vec![0.0; n];
    for r in &obs.records {
        w_sum[r.curve] += r.w;
        r1_sum[r.curve] += r.w * r.r1;
    }
    let mut lengths = Vec::with_capacity(n);
    for i in 0..n {
        if !(w_sum[i] > 0.0) {
            return Err(Error::invalid(format!(
                "path {i} has no frame pairs within the horizon {}",
                hp.h
            )));
        }
        let len = r1_sum[i] / w_sum[i];
        if !(len > 0.0) {
            return Err(Error::invalid(format!(
                "path {i} reads a nonpositive length {len}"
            )));
        }
        lengths.push(len);
    }

    let mut records = Vec::with_capacity(obs.records.len());
    let mut dev_sq = 0.0;
    let mut w_total = 0.0;
    for r in &obs.records {
        let len = lengths[r.curve];
        records.push(FitRecord {
            x: r.v,
            y: r.r2 / len,
            w: r.w,
        });
        let dev = r.r1 / len - 1.0;
        dev_sq += r.w * dev * dev;
        w_total += r.w;
    }
    let unit_slot_rms = (dev_sq / w_total).sqrt();

    let basis = BSplineBasis::clamped_cubic(0.0, 1.0, opts.n_interior_knots)?;
    let kg = fit_penalized(&basis, &records, hp.lambda_tau)?;
    let length = lengths.iter().sum::<f64>() / n as f64;
    Ok(GeodesicCurvature {
        kg,
        length,
        unit_slot_rms,
    })
}

/// Geodesic curvature profile rescaled by curve length, as a frame flow.
struct ScaledByLength<'a> {
    kg: &'a Spline,
    length: f64,
}

impl Theta for ScaledByLength<'_> {
    fn kappa(&self, _s: f64) -> f64 {
        self.length
    }

    fn tau(&self, s: f64) -> f64 {
        self.length * self.kg.eval(s)
    }
}

/// Integrates the frame flow of `curvature` over `grid` starting at `frame0`.
///
/// The curve is read off the first frame columns and stays on the unit
/// sphere up to solver drift. Pass the first frame of an observed path to
/// reconstruct in its position, or the identity for a canonical placement.
pub fn reconstruct_spherical_curve(
    curvature: &GeodesicCurvature,
    frame0: Rot3,
    grid: &[f64],
    substep: f64,
) -> Result<SphericalFramePath> {
    if !(curvature.length > 0.0) {
        return Err(Error::invalid(format!(
            "curve length must be positive, got {}",
            curvature.length
        )));
    }
    let theta = ScaledByLength {
        kg: &curvature.kg,
        length: curvature.length,
    };
    Ok(SphericalFramePath {
        inner: solve_frenet_path(&theta, frame0, grid, substep)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frenet::DEFAULT_SUBSTEP;
    use crate::so3::exp_so3;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

    fn small_circle_frame(colatitude: f64, t: f64) -> Rot3 {
        let (r, z) = (colatitude.sin(), colatitude.cos());
        let lam = TAU * t;
        let alpha = Vec3::new(r * lam.cos(), r * lam.sin(), z);
        let beta = Vec3::new(-lam.sin(), lam.cos(), 0.0);
        let gamma = alpha.cross(&beta);
        Rot3::from_matrix(Mat3::from_columns(&[alpha, beta, gamma]), 1e-9)
            .expect("closed-form frame")
    }

    fn circle_path(colatitude: f64, n: usize) -> SphericalFramePath {
        let grid: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
        let frames = grid
            .iter()
            .map(|&t| small_circle_frame(colatitude, t))
            .collect();
        SphericalFramePath::new(grid, frames).expect("valid circle path")
    }

    fn rotate_path(path: &SphericalFramePath, rot: &Rot3) -> SphericalFramePath {
        let frames = path.frames().iter().map(|q| rot * q).collect();
        SphericalFramePath::new(path.grid().to_vec(), frames).expect("rotation keeps the grid")
    }

    fn target_kg(t: f64) -> f64 {
        1.0 + 0.5 * (TAU * t).sin()
    }

    #[test]
    fn the_generator_couples_the_slots_through_a_pinned_unit() {
        let m = spherical_a(2.5).matrix();
        assert_eq!(m[(0, 1)], -1.0);
        assert_eq!(m[(1, 0)], 1.0);
        assert_eq!(m[(1, 2)], -2.5);
        assert_eq!(m[(2, 1)], 2.5);
        for j in 0..3 {
            assert_eq!(m[(j, j)], 0.0);
        }
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(2, 0)], 0.0);
    }

    #[test]
    fn a_zero_curvature_flow_traces_the_equator() {
        for j in 0..=12 {
            let s = TAU * j as f64 / 12.0;
            let point = exp_so3(&spherical_a(0.0).scale(s)).column(0);
            assert!((point - Vec3::new(s.cos(), s.sin(), 0.0)).norm() <= 1e-12);
        }
    }

    #[test]
    fn frames_from_sampled_points_follow_the_sphere() {
        let n = 100;
        let params: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
        let points: Vec<Vec3> = params
            .iter()
            .map(|&t| {
                let lam = TAU * t;
                Vec3::new(3.7 * lam.cos(), 3.7 * lam.sin(), 0.0)
            })
            .collect();
        let path = spherical_frames(&params, &points, 0.1).expect("clean circle");
        assert_eq!(path.len(), n);
        for (j, q) in path.frames().iter().enumerate() {
            let alpha = q.column(0);
            assert!((alpha - points[j] / 3.7).norm() <= 1e-12);
            assert!(alpha.dot(&q.column(1)).abs() <= 1e-8);
            assert!((q.column(2) - Vec3::new(0.0, 0.0, 1.0)).norm() <= 1e-9);
            assert!(q.orthonormality_defect() <= 1e-12);
        }
        let s = path.grid();
        assert_eq!(s[0], 0.0);
        assert_eq!(s[n - 1], 1.0);
    }

    #[test]
    fn points_off_the_sphere_are_rejected() {
        let n = 50;
        let params: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
        let mut points: Vec<Vec3> = params
            .iter()
            .map(|&t| {
                let lam = TAU * t;
                Vec3::new(lam.cos(), lam.sin(), 0.0)
            })
            .collect();
        points[20] *= 1.02;
        let err = spherical_frames(&params, &points, 0.1).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));

        let err = spherical_frames(&params[..10], &points[..9], 0.1).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn a_stationary_point_cloud_is_degenerate() {
        let params: Vec<f64> = (0..8).map(|j| j as f64 / 7.0).collect();
        let points = vec![Vec3::new(0.0, 0.0, 1.0); 8];
        let err = spherical_frames(&params, &points, 0.25).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpeed { .. }));
    }

    #[test]
    fn great_circles_read_zero_geodesic_curvature() {
        let paths: Vec<SphericalFramePath> = (0..3)
            .map(|i| {
                let rot = exp_so3(&Skew3::new(0.4 * i as f64, -0.3, 0.2 * i as f64 + 0.1));
                rotate_path(&circle_path(FRAC_PI_2, 80), &rot)
            })
            .collect();
        let fit = estimate_mean_kg(&paths, Hyperparams::default(), &FitOptions::default())
            .expect("exact frames fit");
        for j in 0..=200 {
            let t = j as f64 / 200.0;
            assert!(fit.kg.eval(t).abs() <= 1e-3, "kg({t}) = {}", fit.kg.eval(t));
        }
        assert!((fit.length - TAU).abs() <= 1e-6);
    }

    #[test]
    fn small_circles_match_their_closed_form_curvature() {
        let paths = vec![circle_path(FRAC_PI_4, 90), circle_path(FRAC_PI_4, 90)];
        let fit = estimate_mean_kg(&paths, Hyperparams::default(), &FitOptions::default())
            .expect("exact frames fit");
        let want = FRAC_PI_4.cos() / FRAC_PI_4.sin();
        for j in 0..=200 {
            let t = j as f64 / 200.0;
            let got = fit.kg.eval(t);
            assert!((got - want).abs() <= 1e-8, "kg({t}) = {got}, want {want}");
        }
        assert!((fit.length - TAU * FRAC_PI_4.sin()).abs() <= 1e-8);
        assert!(fit.unit_slot_rms <= 1e-10);
    }

    #[test]
    fn reconstruction_and_estimation_close_the_loop() {
        let basis = BSplineBasis::clamped_cubic(0.0, 1.0, 40).expect("basis");
        let dense: Vec<FitRecord> = (0..=400)
            .map(|j| {
                let x = j as f64 / 400.0;
                FitRecord {
                    x,
                    y: target_kg(x),
                    w: 1.0,
                }
            })
            .collect();
        let truth = GeodesicCurvature {
            kg: fit_penalized(&basis, &dense, 0.0).expect("interpolant"),
            length: 6.0,
            unit_slot_rms: 0.0,
        };
        let grid: Vec<f64> = (0..100).map(|j| j as f64 / 99.0).collect();
        let path = reconstruct_spherical_curve(&truth, Rot3::identity(), &grid, DEFAULT_SUBSTEP)
            .expect("solve");
        for p in path.points() {
            assert!((p.norm() - 1.0).abs() <= 1e-7);
        }

        // A single curve carries little record mass, so the default penalty
        // would shrink the fitted amplitude; back it off to expose the
        // accuracy of the records themselves.
        let hp = Hyperparams {
            h: 0.06,
            lambda_tau: 1e-10,
            ..Hyperparams::default()
        };
        let fit = estimate_mean_kg(&[path], hp, &FitOptions::default()).expect("fit");
        assert!((fit.length - 6.0).abs() <= 1e-3, "length {}", fit.length);
        assert!(fit.unit_slot_rms <= 1e-3, "rms {}", fit.unit_slot_rms);
        for j in 0..=200 {
            let t = j as f64 / 200.0;
            let err = (fit.kg.eval(t) - target_kg(t)).abs();
            assert!(err <= 1e-2, "kg error {err} at {t}");
        }
    }

    #[test]
    fn a_global_rotation_leaves_the_estimate_unchanged() {
        let base = circle_path(1.1, 70);
        let turned = rotate_path(&base, &exp_so3(&Skew3::new(0.3, -0.7, 0.25)));
        let hp = Hyperparams::default();
        let plain =
            estimate_mean_kg(&[base], hp, &FitOptions::default()).expect("fit");
        let moved =
            estimate_mean_kg(&[turned], hp, &FitOptions::default()).expect("fit");
        for j in 0..=100 {
            let t = j as f64 / 100.0;
            assert!((plain.kg.eval(t) - moved.kg.eval(t)).abs() <= 1e-10);
        }
        assert!((plain.length - moved.length).abs() <= 1e-12);
    }

    #[test]
    fn estimating_from_no_paths_is_an_error() {
        let err =
            estimate_mean_kg(&[], Hyperparams::default(), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
