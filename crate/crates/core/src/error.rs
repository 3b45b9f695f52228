use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Caller passed an argument outside the operation's domain.
    #[error("usage error: {0}")]
    Usage(String),

    /// Model, prior or filter configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("drift f_{dim} evaluated to a non-finite value")]
    NonFiniteDrift { dim: usize },

    /// Euler-Maruyama produced a non-finite state.
    #[error("path diverged in dimension {dim} (dt = {dt}{})", time.map_or(String::new(), |t| format!(", t = {t}")))]
    Divergence { dim: usize, dt: f64, time: Option<f64> },

    /// Every particle weight is zero (or NaN).
    #[error("total weight collapse at t = {time}")]
    WeightCollapse { time: f64 },

    /// A parameter grid exponent became non-finite.
    #[error("non-finite grid exponent at node theta = {theta} (inner step {step})")]
    GridNumerical { theta: f64, step: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("particle {particle}: {source}")]
    Particle {
        particle: usize,
        #[source]
        source: Box<Error>,
    },

    /// Failure while assimilating the observation with the given (0-based) index.
    #[error("observation {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Strips `Step`/`Particle` wrappers.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Particle { source, .. } | Error::Step { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
