use std::io;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("push-broom time solve did not converge within {iterations} iterations")]
    NoZeroCrossing { iterations: usize },

    #[error("viewing ray is parallel to the height plane")]
    GrazingRay,

    #[error("zero-Doppler time {time:.6} s lies outside the acquisition window")]
    OutOfSwath { time: f64 },

    #[error("range sphere does not reach the height plane h = {height}")]
    NoIntersection { height: f64 },

    #[error("rational polynomial denominator vanished ({value:e})")]
    DenominatorZero { value: f64 },

    #[error("normal equations are ill-conditioned (condition estimate {condition:e}); use a ridge > 0")]
    IllConditioned { condition: f64 },

    #[error("invalid epipolar geometry: {0}")]
    InvalidGeometry(String),

    #[error("block adjustment diverged: {0}")]
    AdjustmentDiverged(String),

    #[error("affine bias system is rank deficient; retry with shift_only")]
    RankDeficient,

    #[error("affine bias slope {slope} is too large for a stable inverse (must be < 0.5)")]
    BiasTooLarge { slope: f64 },

    #[error("intersection did not converge within {iterations} iterations")]
    IntersectDiverged { iterations: usize },

    #[error("weak intersection geometry (condition {condition:e})")]
    WeakGeometry { condition: f64 },

    #[error("neighborhood is degenerate (rank < 2)")]
    DegenerateNeighborhood,

    #[error("malformed {format} data: {message}")]
    Format { format: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            format,
            message: message.into(),
        }
    }

    /// True for failures that come from the numerics rather than from
    /// configuration or I/O.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidInput(_) | Error::Format { .. } | Error::Io(_) | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
