use std::fmt;

use thiserror::Error;

/// A single violated parameter invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveParameter { field: &'static str, value: f64 },
    NonFinite { field: &'static str },
    NarrowbandViolated { gamma_hz: f64, larmor_hz: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveParameter { field, value } => {
                write!(f, "{field} must be positive (got {value})")
            }
            Violation::NonFinite { field } => write!(f, "{field} must be finite"),
            Violation::NarrowbandViolated {
                gamma_hz,
                larmor_hz,
            } => write!(
                f,
                "narrowband regime requires gamma_Hz < larmor_Hz (got {gamma_hz} >= {larmor_hz})"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join(.0))]
    Validation(Vec<Violation>),

    #[error("unknown unit convention `{0}` (expected hwhm-hz, fwhm-hz, angular-rad/s or lifetime-s)")]
    UnknownConvention(String),

    #[error("{name} must be positive (got {value})")]
    NonPositiveInput { name: &'static str, value: f64 },

    #[error("time step {dt_s} s exceeds the limit {max_s} s for this frame")]
    StepTooLarge { dt_s: f64, max_s: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("segment length {segment} exceeds series length {len}")]
    SegmentTooLong { segment: usize, len: usize },

    #[error("no input data")]
    EmptyInput,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no resonance found: peak excess {excess:.3e} below 3x floor noise {noise:.3e}")]
    PeakNotFound { excess: f64, noise: f64 },

    #[error("fit did not converge after {restarts} restarts")]
    NoConvergence { restarts: usize },

    #[error("eps_z - 1 = {0} is below 0.1; estimator variance is unbounded")]
    EpsTooCloseToOne(f64),

    #[error("too few successful sweep points: {ok} (need at least {need})")]
    TooFewPoints { ok: usize, need: usize },

    #[error("params hash mismatch: file has {found:016x}, expected {expected:016x}")]
    HashMismatch { found: u64, expected: u64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input) map to a distinct CLI exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PeakNotFound { .. }
                | Error::NoConvergence { .. }
                | Error::TooFewPoints { .. }
                | Error::InsufficientData(_)
        )
    }
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
