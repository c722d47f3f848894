use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} lies outside the interval [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transform undefined at initial condition: h({xi}) = 0")]
    TransformUndefined { xi: f64 },

    #[error("lag cutoff {lag} too large for orbit of length {len} (need lag <= len / 100)")]
    CutoffTooLarge { lag: usize, len: usize },

    #[error("non-finite state {value} at step {step}")]
    NonFinite { value: f64, step: usize },

    #[error("state {value} left the transform range ({lo}, {hi}) at step {step}")]
    TransformExit {
        value: f64,
        lo: f64,
        hi: f64,
        step: usize,
    },

    #[error("empty sample")]
    EmptySample,

    #[error("{failed} of {total} realizations failed")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
