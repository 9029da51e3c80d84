use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("group size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("unsupported group size {0} (expected 2..={max})", max = crate::nilgroup::MAX_SIZE)]
    UnsupportedSize(usize),

    #[error("expected {expected} coordinates, got {got}")]
    CoordinateCount { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ambiguous canonical element: two lattice candidates within {gap:e} of the minimum {min}")]
    Ambiguous { min: f64, gap: f64 },

    #[error("matrix is not unipotent: residual {residual:e} exceeds {bound:e}")]
    NotUnipotent { residual: f64, bound: f64 },

    #[error("sample budget too small: {0}")]
    SampleBudget(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("substitution has no fixed point from seed '{0}'")]
    NoFixedPoint(char),

    #[error("invalid subshift specification: {0}")]
    InvalidSubshift(String),

    #[error("window search exhausted: no L <= {0} separates the sampled codings")]
    WindowExhausted(usize),

    #[error("integer overflow while {0}")]
    Overflow(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
