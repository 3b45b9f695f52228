//! Sequential Monte Carlo for joint state and parameter estimation in SDEs
//! with additive noise.
//!
//! The centerpiece is a Rao-Blackwellized particle filter: state paths are
//! particles, while each parameter is marginalized on its own grid along the
//! particle's path. Bootstrap, regularized and nested particle filters are
//! provided for comparison, plus exact oracles for small test problems.

pub mod error;
pub mod filters;
pub mod grid;
pub mod observation;
pub mod oracle;
pub mod resampling;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
pub use filters::{run_filter, FilterConfig, FilterKind, ParticleFilter, PosteriorSummary, Problem, StatePrior};
pub use grid::{GridAxis, MarginalSet, ParameterGrid};
pub use observation::{ObservationModel, ObservationRecord};
pub use resampling::ResamplingScheme;
pub use rng::{Purpose, Streams};
pub use sde::{simulate_interval, Drift, Interval, PathSegment, SdeModel};
