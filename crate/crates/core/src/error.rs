use std::io;

use thiserror::Error;

/// Errors raised by the simulation and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum SpectError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The focused transform of the linearization point is too small somewhere
    /// in the unit disc, so the division in the left inverse of `L` is not
    /// defined. Usually the source iterate collapsed towards zero.
    #[error(
        "degenerate focused transform: min over unit disc {min:.3e} is below floor {floor:.3e} \
         (source iterate collapsed; raise the mollifier width or enable projection)"
    )]
    DegenerateFocusedTransform { min: f64, floor: f64 },

    #[error("reference field vanishes on the unit disc")]
    ZeroReference,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = SpectError> = std::result::Result<T, E>;
