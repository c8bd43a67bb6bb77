use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} lies outside the state interval ({lower}, {upper})")]
    Domain {
        what: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("value exp({log_value:.3}) does not fit in an f64")]
    Overflow { log_value: f64 },
    #[error("speed density is singular at the lower boundary x = {at}")]
    Singularity { at: f64 },
    #[error("non-integrable endpoint singularity (local exponent {exponent} <= -1)")]
    NonIntegrable { exponent: f64 },
    #[error("quadrature did not reach tolerance {tol:e} after {doublings} doublings (last change {last_change:e})")]
    ToleranceNotMet {
        tol: f64,
        doublings: u32,
        last_change: f64,
    },
    #[error("lower boundary class {0} is not supported for moment computations")]
    InvalidBoundary(String),
    #[error("absorbing coefficient alpha must be positive, got {0}")]
    AlphaZero(f64),
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("series did not converge within {cap} terms")]
    SeriesDivergence { cap: usize },
    #[error("{failed} of {total} simulated paths exceeded the time cap {cap}")]
    TimeCapExceeded { failed: usize, total: usize, cap: f64 },
    #[error("elastic walk calibration failed: {0}")]
    Calibration(String),
    #[error("reference data: {0}")]
    Reference(String),
    #[error("config: {0}")]
    Config(String),
}

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
