//! From sampled curve points to arclength, Frenet frames and raw
//! curvature/torsion estimates.
//!
//! All outputs use the unit-length convention: the curve is rescaled by its
//! estimated total length, arclength lives in `[0, 1]` and curvature and
//! torsion are those of the rescaled curve (native values times the length).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::interp::cumulative_trapezoid;
use crate::kernel::Kernel;
use crate::localpoly::local_poly_derivatives;
use crate::so3::{project_so3, Mat3, Rot3, Vec3};

/// Curvature floor below which torsion is reported as undefined.
pub const TORSION_KAPPA_TOL: f64 = 1e-8;

/// Pointwise curvature/torsion estimates along one curve.
///
/// Torsion is undefined where the curve is locally straight, hence the
/// per-point option.
#[derive(Debug, Clone)]
pub struct RawTheta {
    pub kappa: Vec<f64>,
    pub tau: Vec<Option<f64>>,
}

/// Settings for [`preprocess_curve`].
#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    /// Window half-width for the local polynomial fits, in units of the
    /// observation parameter (and of normalized arclength for the
    /// refinement pass).
    pub bandwidth: f64,
    /// Degree of the jet fit; must be at least 3.
    pub degree: usize,
    pub kernel: Kernel,
    /// Fraction of the arclength range at each end whose samples get zero
    /// weight downstream.
    pub taper_fraction: f64,
    /// Run the frame refinement that re-fits local cubics constrained to the
    /// Frenet structure. Off by default: it trades a small parametric window
    /// bias for noise robustness, which only pays off on noisy data.
    pub refine: bool,
    /// Speeds below this are treated as degenerate parameterization.
    pub min_speed: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            bandwidth: 0.1,
            degree: 4,
            kernel: Kernel::Epanechnikov,
            taper_fraction: 0.02,
            refine: false,
            min_speed: 1e-8,
        }
    }
}

/// Everything extracted from one observed curve.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    /// Normalized arclength of each sample, increasing from 0 to 1.
    pub s: Vec<f64>,
    /// Total arclength in native units.
    pub length: f64,
    /// Frenet frame `[T N B]` at each sample.
    pub frames: Vec<Rot3>,
    /// Unit-length-scale curvature/torsion at each sample.
    pub raw: RawTheta,
    /// Boundary taper weights in `[0, 1]` per sample.
    pub weights: Vec<f64>,
    /// True when the constrained refinement failed somewhere and plain
    /// Gram-Schmidt frames were kept at those points.
    pub used_fallback: bool,
}

/// Derivatives `x, x', x'', x'''` of the curve at each sample, with respect
/// to the observation parameter.
pub fn curve_jets(
    params: &[f64],
    points: &[Vec3],
    bandwidth: f64,
    degree: usize,
    kernel: Kernel,
) -> Result<Vec<[Vec3; 4]>> {
    if degree < 3 {
        return Err(Error::invalid("jet fits need degree >= 3"));
    }
    if params.len() != points.len() || params.len() < degree + 2 {
        return Err(Error::invalid(format!(
            "{} samples are too few for degree {} jets",
            params.len(),
            degree
        )));
    }
    let coords: [Vec<f64>; 3] = [
        points.iter().map(|p| p.x).collect(),
        points.iter().map(|p| p.y).collect(),
        points.iter().map(|p| p.z).collect(),
    ];
    let range = params[params.len() - 1] - params[0];
    let mut jets = Vec::with_capacity(params.len());
    for (j, &t0) in params.iter().enumerate() {
        // Edge windows on sparse grids may hold too few points for the
        // degree; widen locally until the fit is determined.
        let mut bw = bandwidth;
        loop {
            let count = params.iter().filter(|&&t| ((t - t0) / bw).abs() < 1.0).count();
            if count >= degree + 3 || bw > 2.0 * range {
                break;
            }
            bw *= 1.5;
        }
        let mut d = [Vec3::zeros(); 4];
        for (c, ys) in coords.iter().enumerate() {
            let ders = local_poly_derivatives(params, ys, t0, bw, degree, kernel, j)?;
            for (k, slot) in d.iter_mut().enumerate() {
                slot[c] = ders[k];
            }
        }
        jets.push(d);
    }
    Ok(jets)
}

/// Parameterization-invariant curvature and torsion from derivative triples,
/// in native curve units.
pub fn extrinsic_theta(jets: &[[Vec3; 4]]) -> RawTheta {
    let mut kappa = Vec::with_capacity(jets.len());
    let mut tau = Vec::with_capacity(jets.len());
    for d in jets {
        let speed = d[1].norm();
        let cross = d[1].cross(&d[2]);
        let k = cross.norm() / speed.powi(3);
        kappa.push(k);
        let denom = cross.norm_squared();
        if k < TORSION_KAPPA_TOL || denom == 0.0 {
            tau.push(None);
        } else {
            let det = Mat3::from_columns(&[d[1], d[2], d[3]]).determinant();
            tau.push(Some(det / denom));
        }
    }
    RawTheta { kappa, tau }
}

/// Frenet frames by normalizing `x'` and Gram-Schmidt of `x''` against it.
pub fn gram_schmidt_frames(jets: &[[Vec3; 4]]) -> Result<Vec<Rot3>> {
    let mut frames = Vec::with_capacity(jets.len());
    for (j, d) in jets.iter().enumerate() {
        frames.push(frame_from_pair(&d[1], &d[2], j)?);
    }
    Ok(frames)
}

fn frame_from_pair(d1: &Vec3, d2: &Vec3, index: usize) -> Result<Rot3> {
    let speed = d1.norm();
    if speed <= 0.0 {
        return Err(Error::FrameDegenerate { index });
    }
    let t = d1 / speed;
    let perp = d2 - t * d2.dot(&t);
    let perp_norm = perp.norm();
    if perp_norm <= 1e-12 * d2.norm().max(1.0) {
        return Err(Error::FrameDegenerate { index });
    }
    let n = perp / perp_norm;
    let b = t.cross(&n);
    Ok(Rot3::from_matrix_unchecked(Mat3::from_columns(&[t, n, b])))
}

/// Zero weight within `fraction` of each end of `[0, 1]`, one elsewhere.
pub fn taper_weights(s: &[f64], fraction: f64) -> Vec<f64> {
    s.iter()
        .map(|&v| {
            if v < fraction || v > 1.0 - fraction {
                0.0
            } else {
                1.0
            }
        })
        .collect()
}

/// Weighted least squares with one shared design for three right-hand sides.
/// Returns one coefficient vector per column, or None when the normal matrix
/// is not positive definite.
fn shared_design_ls(cols: &[Vec<f64>], ys: &[Vec3], w: &[f64]) -> Option<Vec<Vec3>> {
    let k = cols.len();
    let m = ys.len();
    let mut normal = DMatrix::zeros(k, k);
    let mut rhs = DMatrix::zeros(k, 3);
    for r in 0..m {
        for a in 0..k {
            let wa = w[r] * cols[a][r];
            for b in a..k {
                normal[(a, b)] += wa * cols[b][r];
            }
            for c in 0..3 {
                rhs[(a, c)] += wa * ys[r][c];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            normal[(a, b)] = normal[(b, a)];
        }
    }
    let chol = nalgebra::linalg::Cholesky::new(normal)?;
    let sol = chol.solve(&rhs);
    Some((0..k).map(|a| Vec3::new(sol[(a, 0)], sol[(a, 1)], sol[(a, 2)])).collect())
}

struct LocalState {
    frame: Rot3,
    kappa: f64,
    kappa_prime: f64,
    tau: f64,
}

/// Weighted regression of `y` on `(u, u^2/2, u^3/6)` without intercept.
fn cubic_scalar_fit(us: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64, f64)> {
    let mut normal = nalgebra::Matrix3::<f64>::zeros();
    let mut rhs = Vec3::zeros();
    for r in 0..us.len() {
        let u = us[r];
        let g = Vec3::new(u, u * u / 2.0, u * u * u / 6.0);
        normal += w[r] * g * g.transpose();
        rhs += w[r] * y[r] * g;
    }
    let chol = nalgebra::linalg::Cholesky::new(normal)?;
    let c = chol.solve(&rhs);
    Some((c.x, c.y, c.z))
}

/// One point of the constrained refinement: alternate between fitting the
/// local cubic whose coefficients follow the Frenet structure
///
/// ```text
/// x(s0 + u) = c + T (u - u^3 kappa^2 / 6)
///               + N (u^2 kappa / 2 + u^3 kappa' / 6)
///               + B (u^3 kappa tau / 6)
/// ```
///
/// for fixed scalars, and re-fitting the scalars by projecting onto the
/// frame directions. Returns None when the scheme does not converge.
fn refine_point(
    s: &[f64],
    points: &[Vec3],
    j: usize,
    bandwidth: f64,
    kernel: Kernel,
    init: LocalState,
) -> Option<LocalState> {
    let mut sel: Vec<usize> = Vec::new();
    let mut w = Vec::new();
    for (k, &sk) in s.iter().enumerate() {
        let u = (sk - s[j]) / bandwidth;
        let kw = kernel.eval(u);
        if kw > 0.0 {
            sel.push(k);
            w.push(kw);
        }
    }
    if sel.len() < 6 {
        return None;
    }
    let us: Vec<f64> = sel.iter().map(|&k| s[k] - s[j]).collect();
    let xs: Vec<Vec3> = sel.iter().map(|&k| points[k]).collect();
    let ones = vec![1.0; us.len()];

    let mut state = init;
    for _ in 0..50 {
        let (kap, kp) = (state.kappa, state.kappa_prime);
        let m_t: Vec<f64> = us.iter().map(|&u| u - u * u * u * kap * kap / 6.0).collect();
        let m_n: Vec<f64> = us
            .iter()
            .map(|&u| u * u * kap / 2.0 + u * u * u * kp / 6.0)
            .collect();

        // The binormal carries only the weak torsion cubic; giving it a
        // free coefficient vector lets least squares inflate it by
        // 1 / (kappa tau) whenever the running torsion is small, and the
        // projected frame then swings or cycles instead of settling. The
        // tangent and normal columns are strongly identified, so the frame
        // comes from those two alone and the scalar refit below recovers
        // torsion from the data cubic along the cross product.
        let cols: Vec<Vec<f64>> =
            vec![ones.clone(), m_t.clone(), m_n.clone()];
        let coef = shared_design_ls(&cols, &xs, &w)?;
        let center = coef[0];
        let t_hat = coef[1];
        let n_hat = coef[2];
        let b_hat = t_hat.cross(&n_hat);
        let frame =
            project_so3(&Mat3::from_columns(&[t_hat, n_hat, b_hat])).ok()?;
        let n = frame.column(1);
        let b = frame.column(2);

        // Scalar refits from residual projections onto the frame. The
        // designs include the lower-order monomials even where the Frenet
        // expansion has none: a slightly misaligned frame leaks the large
        // tangential component into these projections linearly in u, and
        // without the extra columns that leakage would be amplified by
        // 1 / bandwidth^2 into the cubic coefficients.
        let y_n: Vec<f64> = xs.iter().map(|x| (x - center).dot(&n)).collect();
        let y_b: Vec<f64> = xs.iter().map(|x| (x - center).dot(&b)).collect();
        let (_, mut c_n2, mut c_n3) = cubic_scalar_fit(&us, &y_n, &w)?;
        let (_, _, mut c_b3) = cubic_scalar_fit(&us, &y_b, &w)?;
        // Curvature is nonnegative by convention; a negative quadratic
        // coefficient means the normal points the wrong way, so turn the
        // frame half a turn about the tangent rather than clamping.
        let frame = if c_n2 < 0.0 {
            c_n2 = -c_n2;
            c_n3 = -c_n3;
            c_b3 = -c_b3;
            let flip = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
            Rot3::from_matrix_unchecked(frame.matrix() * flip)
        } else {
            frame
        };
        let kappa_new = c_n2.max(1e-6);
        let kp_new = c_n3;
        let tau_new = c_b3 / kappa_new;

        let frame_shift = (frame.matrix() - state.frame.matrix()).norm();
        state = LocalState {
            frame,
            kappa: kappa_new,
            kappa_prime: kp_new,
            tau: tau_new,
        };
        if frame_shift < 1e-8 {
            return Some(state);
        }
    }
    None
}

/// Full preprocessing of one observed curve: jets, arclength
/// normalization, frames (optionally refined), raw curvature/torsion in
/// unit-length scale, and taper weights.
pub fn preprocess_curve(
    params: &[f64],
    points: &[Vec3],
    opts: &PreprocessOptions,
) -> Result<Preprocessed> {
    let jets = curve_jets(params, points, opts.bandwidth, opts.degree, opts.kernel)?;

    let speeds: Vec<f64> = jets.iter().map(|d| d[1].norm()).collect();
    for (j, &v) in speeds.iter().enumerate() {
        if v < opts.min_speed {
            return Err(Error::DegenerateSpeed {
                t: params[j],
                min_speed: opts.min_speed,
            });
        }
    }
    let arc = cumulative_trapezoid(params, &speeds);
    let length = *arc.last().expect("nonempty grid");
    if !(length > 0.0) {
        return Err(Error::DegenerateSpeed {
            t: params[0],
            min_speed: opts.min_speed,
        });
    }
    let mut s: Vec<f64> = arc.iter().map(|&a| a / length).collect();
    // Arclength of distinct samples can collide only through degenerate
    // speed, which was ruled out above; still, enforce strict monotonicity
    // for the frame path constructors downstream.
    for j in 1..s.len() {
        if s[j] <= s[j - 1] {
            return Err(Error::DegenerateSpeed {
                t: params[j],
                min_speed: opts.min_speed,
            });
        }
    }
    if let Some(last) = s.last_mut() {
        *last = 1.0;
    }

    let gs_frames = gram_schmidt_frames(&jets)?;
    let native = extrinsic_theta(&jets);
    let mut raw = RawTheta {
        kappa: native.kappa.iter().map(|k| k * length).collect(),
        tau: native
            .tau
            .iter()
            .map(|t| t.map(|v| v * length))
            .collect(),
    };
    let mut frames = gs_frames;
    let mut used_fallback = false;

    if opts.refine {
        let unit_points: Vec<Vec3> = points.iter().map(|p| p / length).collect();
        for j in 0..s.len() {
            let init = LocalState {
                frame: frames[j],
                kappa: raw.kappa[j].max(1e-6),
                kappa_prime: 0.0,
                tau: raw.tau[j].unwrap_or(0.0),
            };
            match refine_point(&s, &unit_points, j, opts.bandwidth, opts.kernel, init) {
                Some(st) => {
                    frames[j] = st.frame;
                    raw.kappa[j] = st.kappa;
                    // A curvature stuck at the floor means the point is
                    // locally straight and its torsion is meaningless.
                    raw.tau[j] = if st.kappa <= 1e-6 * (1.0 + 1e-9) {
                        None
                    } else {
                        Some(st.tau)
                    };
                }
                None => {
                    used_fallback = true;
                }
            }
        }
    }

    let weights = taper_weights(&s, opts.taper_fraction);
    Ok(Preprocessed {
        s,
        length,
        frames,
        raw,
        weights,
        used_fallback,
    })
}

/// A curve rescaled to unit length, sampled over normalized arclength.
#[derive(Debug, Clone)]
pub struct ArclengthCurve {
    grid: Vec<f64>,
    points: Vec<Vec3>,
    /// Total arclength before normalization, in native units.
    length: f64,
}

impl ArclengthCurve {
    pub fn new(grid: Vec<f64>, points: Vec<Vec3>, length: f64) -> Result<Self> {
        if grid.is_empty() || grid.len() != points.len() {
            return Err(Error::invalid(
                "curve needs matching nonempty grid and point lists",
            ));
        }
        if grid[0] != 0.0 || grid.last().copied().expect("nonempty") > 1.0 + 1e-12 {
            return Err(Error::invalid("arclength grid must start at 0 within [0, 1]"));
        }
        if !grid.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::invalid("arclength grid must be strictly increasing"));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::invalid(format!(
                "curve length must be positive and finite, got {length}"
            )));
        }
        Ok(ArclengthCurve {
            grid,
            points,
            length,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Rescales sampled points to the unit-length curve `Z(u) = X(t(u)) / L`
/// on a uniform grid of `n_out` normalized arclength values, interpolating
/// each coordinate linearly over the per-sample arclengths `s`.
pub fn normalize_to_unit_length(
    points: &[Vec3],
    s: &[f64],
    length: f64,
    n_out: usize,
) -> Result<ArclengthCurve> {
    if points.len() != s.len() || points.len() < 2 {
        return Err(Error::invalid(
            "unit-length resampling needs matching point/arclength lists of length >= 2",
        ));
    }
    if n_out < 2 {
        return Err(Error::invalid("resampled curve needs at least 2 points"));
    }
    if !s.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::invalid("arclength samples must be strictly increasing"));
    }
    let coords: [Vec<f64>; 3] = [
        points.iter().map(|p| p.x / length).collect(),
        points.iter().map(|p| p.y / length).collect(),
        points.iter().map(|p| p.z / length).collect(),
    ];
    let grid = crate::interp::uniform_grid(0.0, 1.0, n_out);
    let resampled: Vec<Vec3> = grid
        .iter()
        .map(|&u| {
            Vec3::new(
                crate::interp::interp_linear(s, &coords[0], u),
                crate::interp::interp_linear(s, &coords[1], u),
                crate::interp::interp_linear(s, &coords[2], u),
            )
        })
        .collect();
    ArclengthCurve::new(grid, resampled, length)
}
