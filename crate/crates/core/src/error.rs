use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("degenerate geometry: source within {distance:e} m of microphone {mic}")]
    DegenerateGeometry { mic: usize, distance: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("underdetermined problem: {measurements} measurements for {unknowns} unknowns")]
    Underdetermined {
        measurements: usize,
        unknowns: usize,
    },

    #[error(
        "normal matrix ill-conditioned at iteration {iteration} (condition number {condition:e})"
    )]
    IllConditioned { iteration: usize, condition: f64 },

    #[error("solver diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        step_norms: Vec<f64>,
    },

    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("no spectral content in signal")]
    NoSignal,

    #[error("correlation peak on the search boundary (lag {lag_samples} samples)")]
    AmbiguousPeak { lag_samples: i64 },

    #[error("window {window}, pair ({mic}, {reference}): {source}")]
    Extraction {
        window: usize,
        mic: usize,
        reference: usize,
        #[source]
        source: Box<Error>,
    },
}
