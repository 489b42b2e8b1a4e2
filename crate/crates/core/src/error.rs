//! Error type shared by every solver in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, numerics or model configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller-supplied argument is outside the accepted range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Two sampled fields do not live on the same lattice.
    #[error("shape mismatch: expected {expected} samples, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("numerical blow-up at t = {t}: {what}")]
    NumericalBlowup { t: f64, what: String },

    /// A quasi-quantal trajectory was requested at or beyond the first caustic.
    #[error("trajectory undefined: requested t = {requested} but the field is only valid up to t = {valid_until}")]
    TrajectoryUndefined { requested: f64, valid_until: f64 },

    #[error("singular amplitude at t = {t}: {what}")]
    SingularAmplitude { t: f64, what: String },

    #[error("divergence undefined: reference density vanishes where the density is positive")]
    DivergenceUndefined,

    #[error("contour advection failed at t = {t}: {what}")]
    Advection { t: f64, what: String },

    #[error("circulation undefined: {0}")]
    CirculationUndefined(String),

    #[error("unreliable winding number: rounding residue {residue:.3e}")]
    UnreliableWinding { residue: f64 },

    #[error("scenario error at `{key}`: {message}")]
    Scenario { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn scenario(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            key: key.into(),
            message: message.into(),
        }
    }
}
