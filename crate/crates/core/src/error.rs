use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("diagonal entry {index} is {value}, must be <= 1")]
    DiagonalTooLarge { index: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("bad sparsity: {0}")]
    BadSparsity(String),

    #[error("solver did not converge after {iterations} iterations (gap {gap:e})")]
    DidNotConverge { iterations: usize, gap: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("node-wise residual variance for coordinate {0} is not positive")]
    TauNonPositive(usize),

    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),

    #[error("selected design is column-rank deficient")]
    RankDeficient,

    #[error("selected model has {size} columns but only {n} samples")]
    ModelTooLarge { size: usize, n: usize },

    #[error("support set is empty")]
    EmptySupport,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no grid point satisfies the one-standard-error rule")]
    GridTooCoarse,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name, used on the CLI's stderr.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotSpd(_) => "NotSPD",
            Error::DiagonalTooLarge { .. } => "DiagonalTooLarge",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::BadSparsity(_) => "BadSparsity",
            Error::DidNotConverge { .. } => "DidNotConverge",
            Error::DegenerateFit(_) => "DegenerateFit",
            Error::TauNonPositive(_) => "TauNonPositive",
            Error::BadAlpha(_) => "BadAlpha",
            Error::RankDeficient => "RankDeficient",
            Error::ModelTooLarge { .. } => "ModelTooLarge",
            Error::EmptySupport => "EmptySupport",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::GridTooCoarse => "GridTooCoarse",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }

    /// Errors caused by bad user input rather than a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::BadSparsity(_)
                | Error::BadAlpha(_)
                | Error::InvalidParameter(_)
                | Error::DiagonalTooLarge { .. }
        )
    }
}

pub(crate) fn check_dims(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch(format!(
            "{what}: got {got}, expected {expected}"
        )));
    }
    Ok(())
}
