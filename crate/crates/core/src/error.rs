use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfDomain { t: f64, horizon: f64 },

    #[error("non-finite {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("target level {target} exceeds grid level {level}")]
    Level { target: u32, level: u32 },

    #[error("noise structure {0} is not supported by Milstein-type corrections (requires Levy-area simulation)")]
    UnsupportedNoise(&'static str),

    #[error("degenerate data: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, SdeError>;
