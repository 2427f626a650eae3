//! Rotation-group primitives: skew matrices, exponential/logarithm maps,
//! geodesic distance, projection to the group, Karcher means and concentrated
//! random rotations.
//!
//! The skew coefficient layout is chosen so that a curvature/torsion pair
//! `(kappa, tau)` maps directly onto the coefficient matrix of the Frenet
//! equation: `hat((kappa, tau, 0))` is exactly the matrix that drives
//! `Q'(s) = Q(s) A(s)`.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Margin around pi inside which the rotation logarithm is refused.
pub const ANGLE_NEAR_PI_MARGIN: f64 = 1e-6;

/// Smallest singular value accepted by [`project_so3`].
pub const PROJECTION_SINGULAR_TOL: f64 = 1e-12;

/// Skew-symmetric 3x3 matrix stored through its three free coefficients.
///
/// `Skew3::new(a, b, c)` materializes as
///
/// ```text
/// [ 0  -a  -c ]
/// [ a   0  -b ]
/// [ c   b   0 ]
/// ```
///
/// so the `(a, b)` slots carry curvature and torsion of a Frenet coefficient
/// matrix while `c` is the slot that vanishes for genuine Frenet paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Skew3 {
    coeffs: Vec3,
}

impl Skew3 {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Skew3 {
            coeffs: Vec3::new(a, b, c),
        }
    }

    pub fn from_vee(v: Vec3) -> Self {
        Skew3 { coeffs: v }
    }

    /// The coefficient vector `(a, b, c)`.
    pub fn vee(&self) -> Vec3 {
        self.coeffs
    }

    pub fn matrix(&self) -> Mat3 {
        let (a, b, c) = (self.coeffs.x, self.coeffs.y, self.coeffs.z);
        Mat3::new(0.0, -a, -c, a, 0.0, -b, c, b, 0.0)
    }

    /// Frobenius norm of the materialized matrix, `sqrt(2) * |vee|`.
    pub fn frobenius_norm(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.coeffs.norm()
    }

    /// Rotation angle of `exp` of this element.
    pub fn angle(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Skew3 {
            coeffs: self.coeffs * factor,
        }
    }

    /// Extracts the coefficients of the skew part of an arbitrary matrix.
    pub fn from_matrix_skew_part(m: &Mat3) -> Self {
        Skew3 {
            coeffs: Vec3::new(
                0.5 * (m[(1, 0)] - m[(0, 1)]),
                0.5 * (m[(2, 1)] - m[(1, 2)]),
                0.5 * (m[(2, 0)] - m[(0, 2)]),
            ),
        }
    }
}

/// A member of SO(3).
///
/// Construction through [`Rot3::from_matrix`] or [`project_so3`] guarantees
/// orthonormality; products and exponentials preserve it to machine precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3(Mat3);

impl Rot3 {
    pub fn identity() -> Self {
        Rot3(Mat3::identity())
    }

    /// Wraps a matrix after checking `|Q^T Q - I|_F <= tol` and `det Q > 0`.
    pub fn from_matrix(m: Mat3, tol: f64) -> Result<Self> {
        let defect = (m.transpose() * m - Mat3::identity()).norm();
        if !defect.is_finite() || defect > tol {
            return Err(Error::invalid(format!(
                "matrix is not orthonormal (defect {defect:.3e} > {tol:.1e})"
            )));
        }
        if m.determinant() < 0.0 {
            return Err(Error::invalid(
                "matrix has negative determinant; not a rotation".to_string(),
            ));
        }
        Ok(Rot3(m))
    }

    /// Wraps a matrix that is already known to be a rotation.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rot3(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rot3(self.0.transpose())
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn column(&self, j: usize) -> Vec3 {
        self.0.column(j).into()
    }

    /// `|Q^T Q - I|_F`, useful for drift diagnostics.
    pub fn orthonormality_defect(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }
}

impl std::ops::Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

impl std::ops::Mul<&Rot3> for &Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: &Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for &Rot3 {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rodrigues exponential of a skew element.
pub fn exp_so3(s: &Skew3) -> Rot3 {
    let phi = s.angle();
    let m = s.matrix();
    let (alpha, beta) = if phi < 1e-4 {
        let p2 = phi * phi;
        (
            1.0 - p2 / 6.0 + p2 * p2 / 120.0,
            0.5 - p2 / 24.0 + p2 * p2 / 720.0,
        )
    } else {
        (phi.sin() / phi, (1.0 - phi.cos()) / (phi * phi))
    };
    Rot3(Mat3::identity() + alpha * m + beta * (m * m))
}

/// Integral of the one-parameter rotation group generated by `s`:
/// `int_0^1 exp(t * hat(s)) dt`, in closed form.
///
/// Used to integrate positions exactly through one constant-coefficient
/// frame step.
pub fn left_jacobian(s: &Skew3) -> Mat3 {
    let phi = s.angle();
    let m = s.matrix();
    let (alpha, beta) = if phi < 1e-4 {
        let p2 = phi * phi;
        (
            0.5 - p2 / 24.0 + p2 * p2 / 720.0,
            1.0 / 6.0 - p2 / 120.0 + p2 * p2 / 5040.0,
        )
    } else {
        (
            (1.0 - phi.cos()) / (phi * phi),
            (phi - phi.sin()) / (phi * phi * phi),
        )
    };
    Mat3::identity() + alpha * m + beta * (m * m)
}

/// Closed-form rotation logarithm.
///
/// Fails with [`Error::AngleNearPi`] when the rotation angle is within
/// `1e-6` of pi. For angles above `arccos(-0.9)` the axis is recovered from
/// the symmetric part of `Q`, which stays well conditioned while the
/// antisymmetric part degenerates.
pub fn log_so3(q: &Rot3) -> Result<Skew3> {
    let m = q.matrix();
    let cos_phi = (0.5 * (q.trace() - 1.0)).clamp(-1.0, 1.0);
    let anti = Skew3::from_matrix_skew_part(m);
    let sin_phi = anti.vee().norm();
    let phi = sin_phi.atan2(cos_phi);

    if phi >= std::f64::consts::PI - ANGLE_NEAR_PI_MARGIN {
        return Err(Error::AngleNearPi { angle: phi });
    }

    if cos_phi > -0.9 {
        let factor = if phi < 1e-8 {
            1.0 + phi * phi / 6.0
        } else {
            phi / sin_phi
        };
        return Ok(Skew3::from_vee(anti.vee() * factor));
    }

    // Near pi: the axis n satisfies (sym(Q) - cos_phi I) / (1 - cos_phi) = n n^T
    // with n expressed in ambient coordinates.
    let sym = 0.5 * (m + m.transpose());
    let outer = (sym - cos_phi * Mat3::identity()) / (1.0 - cos_phi);
    let k = (0..3)
        .max_by(|&i, &j| {
            outer[(i, i)]
                .partial_cmp(&outer[(j, j)])
                .expect("diagonal entries are finite")
        })
        .unwrap();
    let nk = outer[(k, k)].max(0.0).sqrt();
    let mut axis = Vec3::new(outer[(0, k)] / nk, outer[(1, k)] / nk, outer[(2, k)] / nk);
    axis /= axis.norm();

    // The antisymmetric part still carries the correct sign of the axis.
    let anti_ambient = Vec3::new(anti.vee().y, -anti.vee().z, anti.vee().x);
    if axis.dot(&anti_ambient) < 0.0 {
        axis = -axis;
    }
    let w = axis * phi;
    Ok(Skew3::new(w.z, w.x, -w.y))
}

/// Geodesic (bi-invariant) distance `|log(M^T N)|_F`.
pub fn geodesic_dist(m: &Rot3, n: &Rot3) -> Result<f64> {
    let rel = m.transpose() * *n;
    Ok(log_so3(&rel)?.frobenius_norm())
}

/// Projects an arbitrary matrix to the nearest rotation via SVD.
pub fn project_so3(m: &Mat3) -> Result<Rot3> {
    let svd = m.svd(true, true);
    let sigma_min = svd.singular_values.min();
    if !sigma_min.is_finite() || sigma_min < PROJECTION_SINGULAR_TOL {
        return Err(Error::SingularInput { sigma_min });
    }
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v_t requested");
    let sign = (u.determinant() * v_t.determinant()).signum();
    let r = u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, sign)) * v_t;
    Ok(Rot3(r))
}

/// Intrinsic (Karcher) mean by log-mean fixed-point iteration.
///
/// Stops when the Frobenius norm of the mean tangent drops below `tol`.
pub fn karcher_mean(rotations: &[Rot3], tol: f64, max_iter: usize) -> Result<Rot3> {
    if rotations.is_empty() {
        return Err(Error::invalid("karcher_mean needs at least one rotation"));
    }
    let mut mean = rotations[0];
    for _ in 0..max_iter {
        let mut tangent = Vec3::zeros();
        for r in rotations {
            tangent += log_so3(&(mean.transpose() * *r))?.vee();
        }
        tangent /= rotations.len() as f64;
        let step = Skew3::from_vee(tangent);
        if step.frobenius_norm() <= tol {
            return Ok(mean);
        }
        mean = mean * exp_so3(&step);
    }
    Err(Error::NoConvergence {
        what: "karcher mean",
        iterations: max_iter,
    })
}

/// Uniform (Haar) random rotation from a normalized Gaussian quaternion.
pub fn sample_haar<R: Rng + ?Sized>(rng: &mut R) -> Rot3 {
    use rand_distr::StandardNormal;
    loop {
        let q: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if norm < 1e-6 {
            continue;
        }
        let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
        let m = Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        return Rot3(m);
    }
}

/// Draws from the matrix Langevin density `p(Q) ∝ exp(c * tr(M^T Q))` by
/// rejection from Haar with envelope `exp(c * (tr - 3)) <= 1`.
///
/// `concentration = 0` reduces to the uniform distribution. The acceptance
/// rate decays like `c^{-3/2}`; the rejection loop is capped defensively.
pub fn sample_fisher_langevin<R: Rng + ?Sized>(
    mean: &Rot3,
    concentration: f64,
    rng: &mut R,
) -> Result<Rot3> {
    if !(concentration >= 0.0) || !concentration.is_finite() {
        return Err(Error::invalid(format!(
            "concentration must be finite and >= 0, got {concentration}"
        )));
    }
    if concentration == 0.0 {
        return Ok(*mean * sample_haar(rng));
    }
    const MAX_PROPOSALS: usize = 50_000_000;
    for _ in 0..MAX_PROPOSALS {
        let q = sample_haar(rng);
        let log_accept = concentration * (q.trace() - 3.0);
        let u: f64 = rng.gen();
        if u.ln() < log_accept {
            return Ok(*mean * q);
        }
    }
    Err(Error::NoConvergence {
        what: "matrix Langevin rejection sampler",
        iterations: MAX_PROPOSALS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Matrix exponential by 30 plain power-series terms; independent of the
    /// Rodrigues closed form above.
    fn series_exp(m: &Mat3) -> Mat3 {
        let mut acc = Mat3::identity();
        let mut term = Mat3::identity();
        for k in 1..=30 {
            term = term * m / (k as f64);
            acc += term;
        }
        acc
    }

    fn random_vee(rng: &mut ChaCha12Rng, max_norm: f64) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            );
            if v.norm() > 1e-3 {
                let scale = rng.gen::<f64>() * max_norm / v.norm();
                return v * scale;
            }
        }
    }

    #[test]
    fn hat_layout_matches_frenet_convention() {
        let m = Skew3::new(2.0, 3.0, 5.0).matrix();
        let expected = Mat3::new(0.0, -2.0, -5.0, 2.0, 0.0, -3.0, 5.0, 3.0, 0.0);
        assert_eq!(m, expected);
        assert!((m + m.transpose()).norm() == 0.0);
        let v = Skew3::from_matrix_skew_part(&m).vee();
        assert_eq!(v, Vec3::new(2.0, 3.0, 5.0));
    }

    #[test]
    fn quarter_turn_rotates_tangent_normal_plane() {
        let q = exp_so3(&Skew3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((q.matrix() - expected).norm() < 1e-15);
    }

    #[test]
    fn exp_matches_series_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = Skew3::from_vee(random_vee(&mut rng, std::f64::consts::PI));
            let closed = exp_so3(&s);
            let series = series_exp(&s.matrix());
            assert!(
                (closed.matrix() - series).norm() < 1e-13,
                "closed-form exp deviates from series at |w| = {}",
                s.angle()
            );
            assert!(closed.orthonormality_defect() < 1e-14);
        }
    }

    #[test]
    fn left_jacobian_matches_simpson_quadrature() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..50 {
            let s = Skew3::from_vee(random_vee(&mut rng, 3.0));
            // Composite Simpson over t in [0, 1] of exp(t * hat(s)).
            let n = 200;
            let mut acc = Mat3::zeros();
            for k in 0..n {
                let t0 = k as f64 / n as f64;
                let t1 = (k + 1) as f64 / n as f64;
                let tm = 0.5 * (t0 + t1);
                let f = |t: f64| *exp_so3(&s.scale(t)).matrix();
                acc += (t1 - t0) / 6.0 * (f(t0) + 4.0 * f(tm) + f(t1));
            }
            assert!(
                (left_jacobian(&s) - acc).norm() < 1e-10,
                "closed form deviates from quadrature at |w| = {}",
                s.angle()
            );
        }
    }

    #[test]
    fn left_jacobian_series_is_continuous_at_the_switch() {
        for &phi in &[0.9999e-4, 1.0001e-4] {
            let s = Skew3::new(phi, 0.0, 0.0);
            let j = left_jacobian(&s);
            let expected = Mat3::identity() + 0.5 * s.matrix() + s.matrix() * s.matrix() / 6.0;
            assert!((j - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn exp_log_roundtrip_below_pi() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for i in 0..500 {
            // Push some draws deliberately close to the cut locus.
            let max = if i % 5 == 0 {
                std::f64::consts::PI - 2e-6
            } else {
                std::f64::consts::PI - 1e-3
            };
            let v = random_vee(&mut rng, max);
            let q = exp_so3(&Skew3::from_vee(v));
            let w = log_so3(&q).expect("angle below the pi margin").vee();
            for k in 0..3 {
                assert!(
                    (w[k] - v[k]).abs() <= 1e-12,
                    "roundtrip error {:.3e} at |w| = {}",
                    (w[k] - v[k]).abs(),
                    v.norm()
                );
            }
        }
    }

    #[test]
    fn log_near_pi_is_refused() {
        let v = Vec3::new(1.0, 0.2, -0.4);
        let v = v / v.norm() * (std::f64::consts::PI - 1e-8);
        let q = exp_so3(&Skew3::from_vee(v));
        match log_so3(&q) {
            Err(Error::AngleNearPi { angle }) => {
                assert!((angle - std::f64::consts::PI).abs() < 1e-6)
            }
            other => panic!("expected AngleNearPi, got {other:?}"),
        }
    }

    #[test]
    fn geodesic_distance_of_quarter_turn() {
        let q = exp_so3(&Skew3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let d = geodesic_dist(&Rot3::identity(), &q).unwrap();
        assert!((d - 2.221_441_469_079_183).abs() < 1e-12);
    }

    #[test]
    fn geodesic_distance_is_a_bi_invariant_metric() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let a = exp_so3(&Skew3::from_vee(random_vee(&mut rng, 1.4)));
            let b = exp_so3(&Skew3::from_vee(random_vee(&mut rng, 1.4)));
            let c = exp_so3(&Skew3::from_vee(random_vee(&mut rng, 1.4)));
            let dab = geodesic_dist(&a, &b).unwrap();
            let dbc = geodesic_dist(&b, &c).unwrap();
            let dac = geodesic_dist(&a, &c).unwrap();
            assert!(dac <= dab + dbc + 1e-12);

            // Left and right invariance.
            let g = exp_so3(&Skew3::from_vee(random_vee(&mut rng, 1.0)));
            let left = geodesic_dist(&(g * a), &(g * b)).unwrap();
            let right = geodesic_dist(&(a * g), &(b * g)).unwrap();
            assert!((left - dab).abs() < 1e-10);
            assert!((right - dab).abs() < 1e-10);
        }
    }

    /// Coarse-to-fine search over axis-angle pairs; slow but independent of
    /// the SVD projection.
    fn nearest_rotation_brute(m: &Mat3) -> Mat3 {
        let mut best = (f64::INFINITY, Mat3::identity());
        let mut center = Vec3::zeros();
        let mut radius = std::f64::consts::PI;
        for _ in 0..14 {
            let steps = 8;
            for i in 0..=steps {
                for j in 0..=steps {
                    for k in 0..=steps {
                        let v = center
                            + Vec3::new(
                                (i as f64 / steps as f64 - 0.5) * 2.0 * radius,
                                (j as f64 / steps as f64 - 0.5) * 2.0 * radius,
                                (k as f64 / steps as f64 - 0.5) * 2.0 * radius,
                            );
                        let r = exp_so3(&Skew3::from_vee(v));
                        let err = (r.matrix() - m).norm();
                        if err < best.0 {
                            best = (err, *r.matrix());
                            center = v;
                        }
                    }
                }
            }
            radius /= 3.0;
        }
        best.1
    }

    #[test]
    fn projection_is_idempotent_and_near_optimal() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let q = exp_so3(&Skew3::from_vee(random_vee(&mut rng, 2.0)));
        let mut noisy = *q.matrix();
        for i in 0..3 {
            for j in 0..3 {
                noisy[(i, j)] += 1e-6 * (rng.gen::<f64>() - 0.5);
            }
        }
        let projected = project_so3(&noisy).unwrap();
        assert!(projected.orthonormality_defect() < 1e-12);
        assert!((projected.matrix() - q.matrix()).norm() < 1e-5);

        let twice = project_so3(projected.matrix()).unwrap();
        assert!((twice.matrix() - projected.matrix()).norm() < 1e-12);

        let brute = nearest_rotation_brute(&noisy);
        assert!((projected.matrix() - brute).norm() < 1e-4);
    }

    #[test]
    fn projection_rejects_singular_input() {
        let m = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0);
        match project_so3(&m) {
            Err(Error::SingularInput { .. }) => {}
            other => panic!("expected SingularInput, got {other:?}"),
        }
    }

    #[test]
    fn karcher_mean_of_symmetric_pair_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = random_vee(&mut rng, std::f64::consts::FRAC_PI_2 - 1e-3);
            let pair = [
                exp_so3(&Skew3::from_vee(v)),
                exp_so3(&Skew3::from_vee(-v)),
            ];
            let mean = karcher_mean(&pair, 1e-13, 100).unwrap();
            assert!(
                geodesic_dist(&mean, &Rot3::identity()).unwrap() < 1e-9,
                "mean of a symmetric pair should be the identity"
            );
        }
    }

    #[test]
    fn karcher_mean_is_left_equivariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let sample: Vec<Rot3> = (0..6)
            .map(|_| exp_so3(&Skew3::from_vee(random_vee(&mut rng, 0.8))))
            .collect();
        let g = exp_so3(&Skew3::from_vee(random_vee(&mut rng, 1.2)));
        let mean = karcher_mean(&sample, 1e-13, 200).unwrap();
        let shifted: Vec<Rot3> = sample.iter().map(|r| g * *r).collect();
        let mean_shifted = karcher_mean(&shifted, 1e-13, 200).unwrap();
        assert!(geodesic_dist(&(g * mean), &mean_shifted).unwrap() < 1e-9);
    }

    #[test]
    fn karcher_mean_reports_exhausted_budget() {
        let pair = [
            exp_so3(&Skew3::new(1.0, 0.0, 0.0)),
            exp_so3(&Skew3::new(-1.0, 0.0, 0.0)),
        ];
        match karcher_mean(&pair, 1e-15, 0) {
            Err(Error::NoConvergence { .. }) => {}
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    /// Haar sampler for comparison, built from QR of a Gaussian matrix rather
    /// than quaternions.
    fn haar_qr(rng: &mut ChaCha12Rng) -> Mat3 {
        use rand_distr::StandardNormal;
        loop {
            let g = Mat3::from_fn(|_, _| rng.sample(StandardNormal));
            let qr = g.qr();
            let mut q = qr.q();
            let r = qr.r();
            // Fix the sign convention so the distribution is exactly Haar.
            for j in 0..3 {
                if r[(j, j)] < 0.0 {
                    for i in 0..3 {
                        q[(i, j)] = -q[(i, j)];
                    }
                }
            }
            if q.determinant() < 0.0 {
                let (c0, c1) = (q.column(0).into_owned(), q.column(1).into_owned());
                q.set_column(0, &c1);
                q.set_column(1, &c0);
            }
            if (q.transpose() * q - Mat3::identity()).norm() < 1e-10 {
                return q;
            }
        }
    }

    #[test]
    fn langevin_at_zero_concentration_is_haar() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let mut reference = 0.0;
        for _ in 0..100_000 {
            reference += haar_qr(&mut rng).trace();
        }
        reference /= 100_000.0;
        assert!(
            reference.abs() < 0.02,
            "QR Haar oracle has mean trace {reference}"
        );

        let mut ours = 0.0;
        for _ in 0..10_000 {
            ours += sample_fisher_langevin(&Rot3::identity(), 0.0, &mut rng)
                .unwrap()
                .trace();
        }
        ours /= 10_000.0;
        assert!(ours.abs() < 0.05, "c = 0 sampler has mean trace {ours}");
    }

    #[test]
    fn langevin_concentration_orders_mean_trace() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let mean_trace = |c: f64, rng: &mut ChaCha12Rng| {
            let mut acc = 0.0;
            for _ in 0..10_000 {
                acc += sample_fisher_langevin(&Rot3::identity(), c, rng)
                    .unwrap()
                    .trace();
            }
            acc / 10_000.0
        };
        let t2 = mean_trace(2.0, &mut rng);
        let t10 = mean_trace(10.0, &mut rng);
        assert!(
            t10 > t2,
            "higher concentration must tighten around the mean (t2 = {t2}, t10 = {t10})"
        );
    }

    #[test]
    fn langevin_is_deterministic_given_the_seed() {
        let mean = exp_so3(&Skew3::new(0.3, -0.2, 0.1));
        let mut a = ChaCha12Rng::seed_from_u64(1234);
        let mut b = ChaCha12Rng::seed_from_u64(1234);
        let qa = sample_fisher_langevin(&mean, 10.0, &mut a).unwrap();
        let qb = sample_fisher_langevin(&mean, 10.0, &mut b).unwrap();
        assert_eq!(qa.matrix(), qb.matrix());
    }
}
