//! Estimation of mean shape and mean curvature/torsion profiles for
//! populations of 3D curves, built on the curves' Frenet frame paths.
//!
//! The crate is organized in layers:
//!
//! * [`so3`] rotation-group primitives,
//! * [`frenet`] Frenet path solving and curve reconstruction,
//! * [`preprocess`] raw-curve differentiation and frame extraction,
//! * [`estimator`] pseudo-observation smoothing of mean curvature/torsion,
//! * [`alignment`] phase alignment across a population,
//! * [`spherical`] the geodesic-curvature specialization for curves on S2,
//! * [`simgen`] synthetic population generators,
//! * [`baselines`] pointwise and square-root-velocity comparison methods,
//! * [`metrics`] evaluation criteria.

pub mod alignment;
mod dpwarp;
pub mod error;
pub mod estimator;
pub mod frenet;
pub mod interp;
pub mod kernel;
pub mod localpoly;
pub mod preprocess;
pub mod simgen;
pub mod so3;
pub mod spherical;
pub mod spline;

pub use error::{Error, Result};
