use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate polynomial")]
    DegeneratePolynomial,

    #[error("polynomial degree {0} exceeds the root-finder cap of {max}", max = crate::tf_core::MAX_ROOT_DEGREE)]
    DegreeTooLarge(usize),

    #[error("eigenvalue iteration did not converge")]
    EigenFailure,

    #[error("pole proximity: |den(s)| = {magnitude:e} at s = {re} + {im}j")]
    PoleProximity { re: f64, im: f64, magnitude: f64 },

    #[error("pole on shifted imaginary axis (lambda = {lambda})")]
    PoleOnShiftedAxis { lambda: f64 },

    #[error("wrong shifted inertia: expected {expected} unstable shifted poles, found {found}")]
    WrongShiftedInertia { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time-scale ordering: {0}")]
    TimeScaleOrdering(String),

    #[error("divergence: non-finite state at t = {time}")]
    Divergence { time: f64 },

    #[error("insufficient horizon: window of {window} s covers fewer than 10 periods of {period} s")]
    InsufficientHorizon { window: f64, period: f64 },
}

impl Error {
    /// True for errors caused by inputs that violate model assumptions, as
    /// opposed to numerical failures during an analysis.
    pub fn is_invalid_input(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::TimeScaleOrdering(_))
    }
}
