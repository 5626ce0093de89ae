use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown variable label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate variable label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("missing prior variance for classical entry `{0}`")]
    MissingPrior(String),
    #[error("prior variance for `{label}` must be positive, got {value}")]
    NonPositivePrior { label: String, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),
    #[error("measured quadratures are degenerate: {0}")]
    DegenerateMeasurement(String),
    #[error("layouts differ between the two factors")]
    LayoutMismatch,
    #[error("singular precision: {0}")]
    Singular(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("record does not match configuration: {0}")]
    RecordMismatch(String),
    #[error("no stationary distribution: {0}")]
    NoStationary(String),
    #[error("empty window: {0}")]
    EmptyWindow(String),
    #[error("bayes grid too narrow: {0:.3e} posterior mass at the edges")]
    GridTooNarrow(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
