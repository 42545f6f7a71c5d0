use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A stage of the integrator produced a non-finite value.
    #[error("numerical blow-up at t = {t}")]
    BlowUp { t: f64 },

    #[error("run aborted at t = {t}: agent {agent} has drift {drift:e} above {limit:e}")]
    DriftAbort {
        t: f64,
        agent: usize,
        drift: f64,
        limit: f64,
    },

    #[error("critically damped case b^2 = 4ac is not covered by the bound")]
    CriticallyDamped,

    /// The cubic r^3 - 2r + c0 has no positive roots; carries f(sqrt(2/3)).
    #[error("coupling below locking threshold: f(sqrt(2/3)) = {0:e} > 0, no positive roots")]
    NoLockRoots(f64),

    #[error("insufficient horizon: {0}")]
    InsufficientHorizon(String),

    #[error("non-uniform sampling: {0}")]
    NonUniformSampling(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
