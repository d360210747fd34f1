use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the workbench.
///
/// Variants split into two families: input/validation problems and numeric
/// failures. The CLI maps the first family to exit code 1 and the second to 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("io error: {0}")]
    Io(String),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("non-numeric cell in column '{column}' at row {row}: '{value}'")]
    NonNumeric { column: String, row: usize, value: String },
    #[error("missing value in column '{column}' at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("non-binary {role} column '{column}'")]
    NonBinary { role: String, column: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("invalid roles: {0}")]
    Roles(String),
    #[error("rank-deficient design: column {column} is linearly dependent on earlier columns")]
    RankDeficient { column: usize },
    #[error("separation detected in logistic fit")]
    Separation,
    #[error("positivity violation: {count} row(s) with fitted propensity at 0 or 1")]
    Positivity { count: usize },
    #[error("irrelevant instrument: first-stage contrast is {0:e}")]
    IrrelevantInstrument(f64),
    #[error("forbidden regression: two-stage least squares requires a linear first stage")]
    ForbiddenRegression,
    #[error("no instruments retained")]
    NoInstrumentsRetained,
    #[error("weak residual identification: moment derivative is {0:e}")]
    WeakResidualIdentification(f64),
    #[error("heterogeneous estimands: {0}")]
    HeterogeneousEstimands(String),
    #[error("need at least {need} results to pool, got {got}")]
    TooFewResults { need: usize, got: usize },
    #[error("empty treatment arm: {0}")]
    EmptyArm(String),
    #[error("spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// True for failures that arise from the numbers rather than from the
    /// shape of the request.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::Separation
                | Error::Positivity { .. }
                | Error::IrrelevantInstrument(_)
                | Error::NoInstrumentsRetained
                | Error::WeakResidualIdentification(_)
                | Error::EmptyArm(_)
                | Error::Numeric(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Invalid(e.to_string())
    }
}
