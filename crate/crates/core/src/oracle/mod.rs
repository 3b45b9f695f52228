//! Exact references used to validate the filters: a linear Kalman filter, a
//! brute-force joint grid filter for one state and one parameter, and the
//! closed-form parameter posterior for drifts linear in the parameter.

mod conjugate;
mod grid_joint;
mod kalman;

pub use conjugate::{conjugate_posterior, ConjugatePosterior};
pub use grid_joint::{grid_joint_filter, JointGridPosterior, JointGridPrior};
pub use kalman::{kalman_filter, KalmanEstimate, LinearGaussianModel};
