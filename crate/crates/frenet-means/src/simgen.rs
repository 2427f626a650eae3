//! Seeded generators for the simulation scenarios.
//!
//! Four families of synthetic populations are covered: shape variation
//! around a fixed profile (S1), combined shape and phase variation through
//! a parametric warp family (S2), analytic curves with unknown random
//! parameters (S3), and random perturbations of a mean curve on the unit
//! sphere (S4). Every generator is a pure function of its configuration;
//! per-curve randomness comes from independent counter-mode streams split
//! off the master seed, so datasets are reproducible and curves can be
//! generated in parallel.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frenet::{
    reconstruct_curve, solve_frenet_path, FrenetPath, GridTheta, DEFAULT_SUBSTEP,
};
use crate::interp::{cumulative_trapezoid, interp_linear, uniform_grid};
use crate::so3::{sample_fisher_langevin, Mat3, Rot3, Vec3};

/// Knot count of recorded profiles and ground-truth tables on `[0, 1]`.
const PROFILE_KNOTS: usize = 1001;

/// Knot count of the S1 Gaussian process draws over its native domain.
const S1_KNOTS: usize = 501;

/// Parameter domain length of the S1 and S3 families.
const S1_DOMAIN: f64 = 5.0;

const S1_SIGMA_KAPPA: f64 = 0.3;
const S1_SIGMA_TAU: f64 = 0.3;
/// Concentration of the random initial frames of the S1 paths.
const S1_INIT_CONCENTRATION: f64 = 10.0;

/// Upper bound on regenerated curvature draws before giving up.
const MAX_REDRAWS: usize = 1000;

const S3_REFERENCE: [f64; 3] = [1.0, 0.9, 0.8];
const S4_COMPONENTS: usize = 20;

/// Scenario tag, naming both the population model and the observation type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Shape variation, observed as Frenet paths with frame noise.
    S11,
    /// Shape variation, observed as noisy Euclidean curves.
    S12,
    /// Shape and phase variation, observed as Frenet paths.
    S21,
    /// Shape and phase variation, observed as noisy Euclidean curves.
    S22,
    /// Shape and phase variation with additional time warping of the samples.
    S23,
    /// Random analytic curves, population variance 0.02.
    S31,
    /// Random analytic curves, population variance 0.05.
    S32,
    /// Random curves on the unit sphere.
    S4,
}

impl Scenario {
    /// Whether observations are frame paths rather than point clouds.
    pub fn observes_frames(self) -> bool {
        matches!(self, Scenario::S11 | Scenario::S21)
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            Scenario::S11 => "S1.1",
            Scenario::S12 => "S1.2",
            Scenario::S21 => "S2.1",
            Scenario::S22 => "S2.2",
            Scenario::S23 => "S2.3",
            Scenario::S31 => "S3.1",
            Scenario::S32 => "S3.2",
            Scenario::S4 => "S4",
        };
        f.write_str(tag)
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1.1" => Ok(Scenario::S11),
            "S1.2" => Ok(Scenario::S12),
            "S2.1" => Ok(Scenario::S21),
            "S2.2" => Ok(Scenario::S22),
            "S2.3" => Ok(Scenario::S23),
            "S3.1" => Ok(Scenario::S31),
            "S3.2" => Ok(Scenario::S32),
            "S4" => Ok(Scenario::S4),
            other => Err(Error::invalid(format!("unknown scenario tag {other}"))),
        }
    }
}

/// Size, noise level and seed of one simulated dataset.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n_curves: usize,
    pub n_samples: usize,
    /// Frame-noise concentration for S1.1/S2.1, ambient standard deviation
    /// otherwise. Zero disables observation noise in both cases.
    pub noise: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_curves < 1 {
            return Err(Error::invalid("a population needs at least one curve"));
        }
        if self.n_samples < 5 {
            return Err(Error::invalid(format!(
                "{} samples per curve are too few, need at least 5",
                self.n_samples
            )));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::invalid(format!(
                "noise level must be finite and >= 0, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Point observations of one curve at known parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanCurve {
    pub params: Vec<f64>,
    pub points: Vec<Vec3>,
}

/// Observation side of a dataset; the variant is fixed by the scenario.
#[derive(Debug, Clone)]
pub enum Observations {
    Frames(Vec<FrenetPath>),
    Curves(Vec<EuclideanCurve>),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Observations::Frames(f) => f.len(),
            Observations::Curves(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// True population parameter recorded alongside the observations.
///
/// Profiles are tabulated over normalized arclength and carry the curve
/// scale, matching what the estimators read off normalized frame paths.
#[derive(Debug, Clone)]
pub enum GroundTruth {
    /// The population mean profile.
    Theta(GridTheta),
    /// The realized population mean plus the reference the parameters were
    /// drawn around; they differ through the nonlinearity of the model.
    ThetaWithReference { mean: GridTheta, reference: GridTheta },
    /// Geodesic curvature of the mean sphere curve, with its length.
    GeodesicCurvature {
        grid: Vec<f64>,
        kg: Vec<f64>,
        length: f64,
    },
}

/// One simulated population with its bookkeeping.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub observations: Observations,
    pub truth: GroundTruth,
    /// Simulated per-curve profiles, where the model defines them.
    pub per_curve_theta: Option<Vec<GridTheta>>,
    /// Curvature draws regenerated because the pre-rectification profile
    /// crossed zero.
    pub redraws: usize,
    /// Population mean curve length in the original units.
    pub mean_length: f64,
}

/// Matérn covariance with smoothness 5/2 at distance `d`.
pub fn matern52(d: f64, lengthscale: f64) -> f64 {
    let r = 5.0_f64.sqrt() * d.abs() / lengthscale;
    (1.0 + r + r * r / 3.0) * (-r).exp()
}

/// Cholesky factor of a Matérn 5/2 covariance over a fixed grid, built once
/// and reused across draws.
pub struct MaternSampler {
    factor: DMatrix<f64>,
}

impl MaternSampler {
    pub fn new(grid: &[f64], lengthscale: f64) -> Self {
        assert!(
            grid.len() <= 2000,
            "covariance factorization is capped at 2000 grid points"
        );
        assert!(lengthscale > 0.0, "lengthscale must be positive");
        let n = grid.len();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] = matern52(grid[i] - grid[j], lengthscale);
            }
        }
        for i in 0..n {
            cov[(i, i)] += 1e-10;
        }
        let factor = cov
            .cholesky()
            .expect("jittered covariance is positive definite")
            .l();
        MaternSampler { factor }
    }

    /// One zero-mean draw over the construction grid.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.factor.nrows();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.factor * z).iter().copied().collect()
    }
}

/// Single zero-mean Matérn 5/2 draw over `grid`.
pub fn matern52_gp_sample<R: Rng + ?Sized>(
    grid: &[f64],
    lengthscale: f64,
    rng: &mut R,
) -> Vec<f64> {
    MaternSampler::new(grid, lengthscale).draw(rng)
}

/// Generates the dataset described by `config`.
pub fn generate(config: &ScenarioConfig) -> Dataset {
    config
        .validate()
        .expect("scenario configuration violates its invariants");
    match config.scenario {
        Scenario::S11 | Scenario::S12 => gen_s1(config),
        Scenario::S21 | Scenario::S22 | Scenario::S23 => gen_s2(config),
        Scenario::S31 | Scenario::S32 => gen_s3(config),
        Scenario::S4 => gen_s4(config),
    }
}

/// RNG of curve `i`: stream `i + 1` of the master seed (stream 0 is
/// reserved for population-level draws).
fn curve_rng(seed: u64, curve: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(curve as u64 + 1);
    rng
}

/// `n` equally spaced values covering `[lo, hi]`; the midpoint when `n = 1`.
fn spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        uniform_grid(lo, hi, n)
    }
}

fn gaussian_vec3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    )
}

fn perturb_points<R: Rng + ?Sized>(points: &mut [Vec3], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for p in points {
        *p += gaussian_vec3(rng) * sigma;
    }
}

/// Right-multiplies every frame by an independent concentrated rotation.
fn perturb_frames<R: Rng + ?Sized>(path: FrenetPath, alpha: f64, rng: &mut R) -> FrenetPath {
    if alpha == 0.0 {
        return path;
    }
    let frames: Vec<Rot3> = path
        .frames()
        .iter()
        .map(|q| {
            let m = sample_fisher_langevin(&Rot3::identity(), alpha, rng)
                .expect("validated concentration");
            *q * m
        })
        .collect();
    FrenetPath::new(path.grid().to_vec(), frames).expect("grid is unchanged")
}

fn s1_mean_kappa(s: f64) -> f64 {
    s.sin().exp()
}

fn s1_mean_tau(s: f64) -> f64 {
    0.2 * s - 0.5
}

/// Shape-variation family: independent Matérn perturbations of a fixed
/// profile, random initial frames, and either frame or point observations.
pub fn gen_s1(config: &ScenarioConfig) -> Dataset {
    gen_s1_inner(config, S1_SIGMA_KAPPA, S1_SIGMA_TAU, Some(S1_INIT_CONCENTRATION))
}

struct SimCurve {
    theta: GridTheta,
    frames: Option<FrenetPath>,
    curve: Option<EuclideanCurve>,
    redraws: usize,
    length: f64,
}

fn gen_s1_inner(
    config: &ScenarioConfig,
    sigma_kappa: f64,
    sigma_tau: f64,
    init_concentration: Option<f64>,
) -> Dataset {
    let gp_grid = uniform_grid(0.0, S1_DOMAIN, S1_KNOTS);
    let ref_grid = uniform_grid(0.0, 1.0, S1_KNOTS);
    let sampler = MaternSampler::new(&gp_grid, 1.0);
    let sample_grid = uniform_grid(0.0, 1.0, config.n_samples);

    let curves: Vec<SimCurve> = (0..config.n_curves)
        .into_par_iter()
        .map(|i| {
            let mut rng = curve_rng(config.seed, i);
            // The rectified profile |kappa-bar + sigma zeta| is nonnegative by
            // construction, but a sign crossing would kink it; such draws are
            // regenerated and counted.
            let mut redraws = 0;
            let zeta_kappa = loop {
                let z = sampler.draw(&mut rng);
                let positive = gp_grid
                    .iter()
                    .zip(&z)
                    .all(|(&s, &zk)| s1_mean_kappa(s) + sigma_kappa * zk > 0.0);
                if positive {
                    break z;
                }
                redraws += 1;
                assert!(
                    redraws <= MAX_REDRAWS,
                    "curvature rejection sampling exceeded its budget"
                );
            };
            let zeta_tau = sampler.draw(&mut rng);
            let q0 = match init_concentration {
                Some(alpha0) => sample_fisher_langevin(&Rot3::identity(), alpha0, &mut rng)
                    .expect("fixed positive concentration"),
                None => Rot3::identity(),
            };

            let kappa: Vec<f64> = gp_grid
                .iter()
                .zip(&zeta_kappa)
                .map(|(&s, &z)| S1_DOMAIN * (s1_mean_kappa(s) + sigma_kappa * z).abs())
                .collect();
            let tau: Vec<f64> = gp_grid
                .iter()
                .zip(&zeta_tau)
                .map(|(&s, &z)| S1_DOMAIN * (s1_mean_tau(s) + sigma_tau * z))
                .collect();
            let theta = GridTheta::new(ref_grid.clone(), kappa, tau).expect("uniform knots");

            let (frames, curve) = match config.scenario {
                Scenario::S12 => {
                    let mut points =
                        reconstruct_curve(&theta, q0, Vec3::zeros(), &sample_grid, DEFAULT_SUBSTEP)
                            .expect("increasing sample grid");
                    for p in &mut points {
                        *p *= S1_DOMAIN;
                    }
                    perturb_points(&mut points, config.noise, &mut rng);
                    (
                        None,
                        Some(EuclideanCurve {
                            params: sample_grid.clone(),
                            points,
                        }),
                    )
                }
                _ => {
                    let path = solve_frenet_path(&theta, q0, &sample_grid, DEFAULT_SUBSTEP)
                        .expect("increasing sample grid");
                    (Some(perturb_frames(path, config.noise, &mut rng)), None)
                }
            };
            SimCurve {
                theta,
                frames,
                curve,
                redraws,
                length: S1_DOMAIN,
            }
        })
        .collect();

    let truth_kappa: Vec<f64> = gp_grid.iter().map(|&s| S1_DOMAIN * s1_mean_kappa(s)).collect();
    let truth_tau: Vec<f64> = gp_grid.iter().map(|&s| S1_DOMAIN * s1_mean_tau(s)).collect();
    let truth = GroundTruth::Theta(
        GridTheta::new(ref_grid, truth_kappa, truth_tau).expect("uniform knots"),
    );
    assemble(config, curves, truth)
}

fn assemble(config: &ScenarioConfig, curves: Vec<SimCurve>, truth: GroundTruth) -> Dataset {
    let redraws = curves.iter().map(|c| c.redraws).sum();
    let mean_length = curves.iter().map(|c| c.length).sum::<f64>() / curves.len() as f64;
    let thetas: Vec<GridTheta> = curves.iter().map(|c| c.theta.clone()).collect();
    let observations = if config.scenario.observes_frames() {
        Observations::Frames(curves.into_iter().map(|c| c.frames.expect("frame scenario")).collect())
    } else {
        Observations::Curves(curves.into_iter().map(|c| c.curve.expect("curve scenario")).collect())
    };
    Dataset {
        config: *config,
        observations,
        truth,
        per_curve_theta: Some(thetas),
        redraws,
        mean_length,
    }
}

fn s2_mean_kappa(s: f64) -> f64 {
    10.0 * ((3.0 * s).sin() + 1.0)
}

fn s2_mean_tau(s: f64) -> f64 {
    -10.0 * (std::f64::consts::TAU * s).sin()
}

/// Parameter warp `omega` of the phase family; identity at `a = 0`.
fn s2_omega(a: f64, s: f64) -> f64 {
    if a.abs() < 1e-12 {
        s
    } else {
        (s * a.exp_m1()).ln_1p() / a
    }
}

fn s2_omega_prime(a: f64, s: f64) -> f64 {
    if a.abs() < 1e-12 {
        1.0
    } else {
        let em1 = a.exp_m1();
        em1 / (a * (s * em1 + 1.0))
    }
}

/// Inverse of `s2_omega`: the observed space warp of the family.
fn s2_gamma(a: f64, s: f64) -> f64 {
    if a.abs() < 1e-12 {
        s
    } else {
        (a * s).exp_m1() / a.exp_m1()
    }
}

/// Extra time warp of the S2.3 samples, strictly increasing for |b| < 0.159.
fn s2_h(b: f64, t: f64) -> f64 {
    b * (std::f64::consts::TAU * t).sin() + t
}

/// Shape-and-phase family: each profile is the mean profile pushed through
/// a member of a fixed warp family, so the population varies in phase while
/// sharing one shape.
pub fn gen_s2(config: &ScenarioConfig) -> Dataset {
    let profile_grid = uniform_grid(0.0, 1.0, PROFILE_KNOTS);
    let sample_grid = uniform_grid(0.0, 1.0, config.n_samples);
    let warp_strengths = spaced(-1.0, 1.0, config.n_curves);
    let time_warps = spaced(-0.1, 0.1, config.n_curves);

    let curves: Vec<SimCurve> = (0..config.n_curves)
        .into_par_iter()
        .map(|i| {
            let mut rng = curve_rng(config.seed, i);
            let a = warp_strengths[i];
            let kappa: Vec<f64> = profile_grid
                .iter()
                .map(|&s| s2_omega_prime(a, s) * s2_mean_kappa(s2_omega(a, s)))
                .collect();
            let tau: Vec<f64> = profile_grid
                .iter()
                .map(|&s| s2_omega_prime(a, s) * s2_mean_tau(s2_omega(a, s)))
                .collect();
            let theta =
                GridTheta::new(profile_grid.clone(), kappa, tau).expect("uniform knots");

            let (frames, curve) = match config.scenario {
                Scenario::S21 => {
                    let path =
                        solve_frenet_path(&theta, Rot3::identity(), &sample_grid, DEFAULT_SUBSTEP)
                            .expect("increasing sample grid");
                    (Some(perturb_frames(path, config.noise, &mut rng)), None)
                }
                Scenario::S22 => {
                    let mut points = reconstruct_curve(
                        &theta,
                        Rot3::identity(),
                        Vec3::zeros(),
                        &sample_grid,
                        DEFAULT_SUBSTEP,
                    )
                    .expect("increasing sample grid");
                    perturb_points(&mut points, config.noise, &mut rng);
                    (
                        None,
                        Some(EuclideanCurve {
                            params: sample_grid.clone(),
                            points,
                        }),
                    )
                }
                _ => {
                    // S2.3 samples the curve at warped arclengths while the
                    // recorded parameter stays the uniform time grid.
                    let b = time_warps[i];
                    let positions: Vec<f64> = sample_grid
                        .iter()
                        .map(|&t| s2_gamma(a, s2_h(b, t)))
                        .collect();
                    let mut points = reconstruct_curve(
                        &theta,
                        Rot3::identity(),
                        Vec3::zeros(),
                        &positions,
                        DEFAULT_SUBSTEP,
                    )
                    .expect("warped grid stays increasing");
                    perturb_points(&mut points, config.noise, &mut rng);
                    (
                        None,
                        Some(EuclideanCurve {
                            params: sample_grid.clone(),
                            points,
                        }),
                    )
                }
            };
            SimCurve {
                theta,
                frames,
                curve,
                redraws: 0,
                length: 1.0,
            }
        })
        .collect();

    let truth_kappa: Vec<f64> = profile_grid.iter().map(|&s| s2_mean_kappa(s)).collect();
    let truth_tau: Vec<f64> = profile_grid.iter().map(|&s| s2_mean_tau(s)).collect();
    let truth = GroundTruth::Theta(
        GridTheta::new(profile_grid, truth_kappa, truth_tau).expect("uniform knots"),
    );
    assemble(config, curves, truth)
}

fn s3_position(phi: &[f64; 3], t: f64) -> Vec3 {
    Vec3::new((phi[0] * t).cos(), (phi[1] * t).sin(), phi[2] * t)
}

/// Curvature and torsion of the analytic S3 curve at parameter `t`.
fn s3_theta(phi: &[f64; 3], t: f64) -> (f64, f64) {
    let (a, b, c) = (phi[0], phi[1], phi[2]);
    let d1 = Vec3::new(-a * (a * t).sin(), b * (b * t).cos(), c);
    let d2 = Vec3::new(-a * a * (a * t).cos(), -b * b * (b * t).sin(), 0.0);
    let d3 = Vec3::new(a * a * a * (a * t).sin(), -b * b * b * (b * t).cos(), 0.0);
    let cross = d1.cross(&d2);
    let kappa = cross.norm() / d1.norm().powi(3);
    let tau = cross.dot(&d3) / cross.norm_squared();
    (kappa, tau)
}

/// Tabulates the scale-carrying profile of one S3 curve over normalized
/// arclength, returning it with the curve length.
fn s3_profile(phi: &[f64; 3], ref_grid: &[f64]) -> (GridTheta, f64) {
    let t_dense = uniform_grid(0.0, S1_DOMAIN, PROFILE_KNOTS);
    let speeds: Vec<f64> = t_dense
        .iter()
        .map(|&t| {
            Vec3::new(
                -phi[0] * (phi[0] * t).sin(),
                phi[1] * (phi[1] * t).cos(),
                phi[2],
            )
            .norm()
        })
        .collect();
    let arc = cumulative_trapezoid(&t_dense, &speeds);
    let length = *arc.last().expect("nonempty dense grid");
    let arc_norm: Vec<f64> = arc.iter().map(|&a| a / length).collect();
    let mut kappa = Vec::with_capacity(ref_grid.len());
    let mut tau = Vec::with_capacity(ref_grid.len());
    for &u in ref_grid {
        let t = interp_linear(&arc_norm, &t_dense, u);
        let (k, w) = s3_theta(phi, t);
        kappa.push(length * k);
        tau.push(length * w);
    }
    (
        GridTheta::new(ref_grid.to_vec(), kappa, tau).expect("uniform knots"),
        length,
    )
}

/// Unknown-parameter family: analytic curves with Gaussian parameter draws
/// around a reference, observed as noisy points on a uniform time grid.
pub fn gen_s3(config: &ScenarioConfig) -> Dataset {
    let variance: f64 = match config.scenario {
        Scenario::S32 => 0.05,
        _ => 0.02,
    };
    let sd = variance.sqrt();
    let ref_grid = uniform_grid(0.0, 1.0, PROFILE_KNOTS);
    let t_grid = uniform_grid(0.0, S1_DOMAIN, config.n_samples);

    let curves: Vec<SimCurve> = (0..config.n_curves)
        .into_par_iter()
        .map(|i| {
            let mut rng = curve_rng(config.seed, i);
            let phi = [
                S3_REFERENCE[0] + sd * rng.sample::<f64, _>(StandardNormal),
                S3_REFERENCE[1] + sd * rng.sample::<f64, _>(StandardNormal),
                S3_REFERENCE[2] + sd * rng.sample::<f64, _>(StandardNormal),
            ];
            let (theta, length) = s3_profile(&phi, &ref_grid);
            let mut points: Vec<Vec3> = t_grid.iter().map(|&t| s3_position(&phi, t)).collect();
            perturb_points(&mut points, config.noise, &mut rng);
            SimCurve {
                theta,
                frames: None,
                curve: Some(EuclideanCurve {
                    params: t_grid.clone(),
                    points,
                }),
                redraws: 0,
                length,
            }
        })
        .collect();

    let (reference, _) = s3_profile(&S3_REFERENCE, &ref_grid);
    let n = curves.len() as f64;
    let mut mean_kappa = vec![0.0; ref_grid.len()];
    let mut mean_tau = vec![0.0; ref_grid.len()];
    for c in &curves {
        for (acc, &v) in mean_kappa.iter_mut().zip(c.theta.kappa_values()) {
            *acc += v / n;
        }
        for (acc, &v) in mean_tau.iter_mut().zip(c.theta.tau_values()) {
            *acc += v / n;
        }
    }
    let truth = GroundTruth::ThetaWithReference {
        mean: GridTheta::new(ref_grid, mean_kappa, mean_tau).expect("uniform knots"),
        reference,
    };
    assemble(config, curves, truth)
}

/// Mean curve of the sphere family in spherical coordinates.
fn s4_mu(t: f64) -> Vec3 {
    let colat = 5.0 * (t + 1.0);
    let lon = 4.0 * t + 0.5;
    Vec3::new(
        colat.sin() * lon.cos(),
        colat.sin() * lon.sin(),
        colat.cos(),
    )
}

fn s4_speed(t: f64) -> f64 {
    let s = (5.0 * (t + 1.0)).sin();
    (25.0 + 16.0 * s * s).sqrt()
}

/// Geodesic curvature of the mean sphere curve, in closed form.
fn s4_kg(t: f64) -> f64 {
    let colat = 5.0 * (t + 1.0);
    let (s, c) = (colat.sin(), colat.cos());
    c * (200.0 + 64.0 * s * s) / (25.0 + 16.0 * s * s).powf(1.5)
}

/// Minimal rotation taking the north pole to `target` (a unit vector).
fn rotation_from_pole(target: &Vec3) -> Mat3 {
    let c = target.z;
    let w = Vec3::new(-target.y, target.x, 0.0);
    let s2 = w.norm_squared();
    if s2 < 1e-24 {
        if c > 0.0 {
            Mat3::identity()
        } else {
            // Antipodal: half turn about the x axis.
            Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)
        }
    } else {
        let k = Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0);
        Mat3::identity() + k + k * k * ((1.0 - c) / s2)
    }
}

/// First `count` orthonormal Legendre polynomials on `[0, 1]` at `t`.
fn orthonormal_legendre(t: f64, count: usize) -> Vec<f64> {
    let x = 2.0 * t - 1.0;
    let mut values = Vec::with_capacity(count);
    let (mut prev, mut cur) = (1.0, x);
    for k in 1..=count {
        let raw = if k == 1 { prev } else { cur };
        values.push(((2 * k - 1) as f64).sqrt() * raw);
        if k >= 2 {
            let m = k as f64 - 1.0;
            let next = ((2.0 * m + 1.0) * x * cur - m * prev) / (m + 1.0);
            prev = cur;
            cur = next;
        }
    }
    values
}

/// Orthonormal tangent fields along the mean sphere curve.
fn s4_tangent_basis(t: f64, count: usize) -> Vec<Vec3> {
    let rot = rotation_from_pole(&s4_mu(t));
    let first = orthonormal_legendre(0.5 * t, count);
    let second = orthonormal_legendre(0.5 * (t + 1.0), count);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    (0..count)
        .map(|k| rot * Vec3::new(half * first[k], half * second[k], 0.0))
        .collect()
}

/// Exponential map of the unit sphere at `base`.
fn sphere_exp(base: &Vec3, tangent: &Vec3) -> Vec3 {
    let r = tangent.norm();
    if r < 1e-12 {
        return *base;
    }
    base * r.cos() + tangent * (r.sin() / r)
}

/// One sample curve point of the sphere family given its component scores.
fn s4_point(t: f64, scores: &[f64]) -> Vec3 {
    let basis = s4_tangent_basis(t, scores.len());
    let mut tangent = Vec3::zeros();
    for (xi, b) in scores.iter().zip(&basis) {
        tangent += b * *xi;
    }
    sphere_exp(&s4_mu(t), &tangent)
}

/// Sphere family: tangent-space Gaussian perturbations of a fixed mean
/// curve, mapped back by the exponential map and observed with ambient
/// noise. The recorded truth is the geodesic curvature of the mean curve
/// over its normalized arclength.
pub fn gen_s4(config: &ScenarioConfig) -> Dataset {
    let t_grid = uniform_grid(0.0, 1.0, config.n_samples);

    let curves: Vec<SimCurve> = (0..config.n_curves)
        .into_par_iter()
        .map(|i| {
            let mut rng = curve_rng(config.seed, i);
            let scores: Vec<f64> = (1..=S4_COMPONENTS)
                .map(|k| {
                    let sd = 0.07_f64.powf(k as f64 / 4.0);
                    sd * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            let mut points: Vec<Vec3> = t_grid.iter().map(|&t| s4_point(t, &scores)).collect();
            perturb_points(&mut points, config.noise, &mut rng);
            SimCurve {
                theta: GridTheta::new(vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0])
                    .expect("placeholder"),
                frames: None,
                curve: Some(EuclideanCurve {
                    params: t_grid.clone(),
                    points,
                }),
                redraws: 0,
                length: 0.0,
            }
        })
        .collect();

    let dense = uniform_grid(0.0, 1.0, 2 * PROFILE_KNOTS - 1);
    let speeds: Vec<f64> = dense.iter().map(|&t| s4_speed(t)).collect();
    let arc = cumulative_trapezoid(&dense, &speeds);
    let length = *arc.last().expect("nonempty dense grid");
    let arc_norm: Vec<f64> = arc.iter().map(|&a| a / length).collect();
    let ref_grid = uniform_grid(0.0, 1.0, PROFILE_KNOTS);
    let kg: Vec<f64> = ref_grid
        .iter()
        .map(|&u| s4_kg(interp_linear(&arc_norm, &dense, u)))
        .collect();

    let observations = Observations::Curves(
        curves
            .into_iter()
            .map(|c| c.curve.expect("curve scenario"))
            .collect(),
    );
    Dataset {
        config: *config,
        observations,
        truth: GroundTruth::GeodesicCurvature {
            grid: ref_grid,
            kg,
            length,
        },
        per_curve_theta: None,
        redraws: 0,
        mean_length: length,
    }
}
