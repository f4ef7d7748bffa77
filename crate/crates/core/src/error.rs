use thiserror::Error;

/// Errors raised by the plant, safety, learning and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller broke a precondition (dimension mismatch, empty input, bad kind).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A map produced NaN or infinity.
    #[error("non-finite value produced by {map}")]
    NonFinite { map: &'static str },

    /// The state left the domain where the barrier function is defined.
    #[error("barrier domain violated: margin {margin:.6e} ({context})")]
    BarrierDomain { margin: f64, context: &'static str },

    /// The optimal multiplier is undefined because the barrier direction is not actuated.
    #[error("optimal multiplier undefined: R_bg = {r_bg:.3e}")]
    UndefinedMultiplier { r_bg: f64 },

    /// Critic gain matrix lost positive definiteness.
    #[error("critic gain matrix is not positive definite (min eigenvalue {min_eig:.3e})")]
    GainNotPositiveDefinite { min_eig: f64 },

    /// Riccati or other initialisation failure.
    #[error("initialization failed: {0}")]
    Init(String),

    /// Scenario configuration is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_finite(values: &[f64], map: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { map })
    }
}
