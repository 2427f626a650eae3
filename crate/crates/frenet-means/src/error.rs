use thiserror::Error;

/// Errors shared across the estimation stack.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// The rotation logarithm is requested too close to the cut locus.
    #[error("rotation angle {angle} is within 1e-6 of pi, where the logarithm is ill-conditioned")]
    AngleNearPi { angle: f64 },

    /// A matrix that must be projected or inverted is numerically rank deficient.
    #[error("input matrix is numerically singular (smallest singular value {sigma_min:.3e})")]
    SingularInput { sigma_min: f64 },

    /// An iterative routine ran out of its iteration budget.
    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    /// The estimated speed vanishes, so arclength reparametrization is undefined.
    #[error("estimated speed falls below {min_speed:.1e} near t = {t}; arclength is undefined")]
    DegenerateSpeed { t: f64, min_speed: f64 },

    /// A local regression window is too thin for the requested polynomial degree.
    #[error(
        "local design matrix at grid point {index} has condition number {cond:.3e} (> {limit:.1e}); \
         increase the bandwidth"
    )]
    IllConditioned { index: usize, cond: f64, limit: f64 },

    /// Derivative vectors at a grid point do not span a frame.
    #[error("derivative vectors at grid point {index} do not span an oriented frame")]
    FrameDegenerate { index: usize },

    /// The penalized spline system cannot be solved.
    #[error("spline system is rank deficient: {detail}")]
    RankDeficient { detail: String },

    /// A cross-validation fold removes every frame of some curve.
    #[error("cross-validation fold {fold} leaves curve {curve} with too few retained frames")]
    FoldTooSmall { fold: usize, curve: usize },

    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
