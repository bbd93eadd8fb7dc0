use thiserror::Error;

/// Errors raised by the geometry kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("metric is not positive definite at grid point {point} (smallest eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { point: usize, eigenvalue: f64 },

    #[error("degenerate differential at {} grid point(s), first at {}", points.len(), points.first().copied().unwrap_or(0))]
    DegenerateImmersion { points: Vec<usize> },

    #[error("initial frame is not special orthogonal (orthogonality defect {defect:e}, det {det})")]
    NotSpecialOrthogonal { defect: f64, det: f64 },

    #[error("grid point {0:?} is outside the chart")]
    OffGrid(Vec<usize>),

    #[error("non-finite value in field at grid point {0}")]
    NonFinite(usize),

    #[error("sphere-valued field has |f| = {norm} at grid point {point}")]
    NotUnitLength { point: usize, norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_mismatch(expected: impl std::fmt::Debug, found: impl std::fmt::Debug) -> Error {
    Error::ShapeMismatch {
        expected: format!("{expected:?}"),
        found: format!("{found:?}"),
    }
}
