use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:e})")]
    NotPd { min_eig: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("covariance matrix is singular (smallest eigenvalue {min_eig:e})")]
    SingularCov { min_eig: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("significance level must lie in (0, 1], got {0}")]
    BadEta(f64),

    #[error("risk measure {risk} has no closed-form coefficient under {class}")]
    UnsupportedPair { risk: String, class: String },
    #[error("mean-variance is not positive homogeneous; no standard risk coefficient exists")]
    NotPositiveHomogeneous,
    #[error("not an admissible spectrum: {0}")]
    NotAdmissibleSpectrum(String),
    #[error("not an admissible distortion: {0}")]
    NotAdmissibleDistortion(String),
    #[error("empty family of spectra")]
    EmptyFamily,
    #[error("argument {0} outside the open unit interval")]
    OutOfRange(f64),

    #[error("standard risk coefficient {0} is negative; the closed-form risk does not apply")]
    NegativeAlpha(f64),
    #[error("worst-case moments need a strictly positive risk coefficient, got {0}")]
    AlphaNotPositive(f64),
    #[error("portfolio vector is zero")]
    ZeroPortfolio,
    #[error("portfolio deviation wᵀΣw is zero; worst-case covariance is undefined")]
    DegenerateDeviation,
    #[error("worst-case moments are only available for the unweighted Gelbrich ball")]
    MahalanobisUnsupported,
    #[error("invalid risk level or aversion parameter {0}")]
    BadBeta(f64),
    #[error("root bracketing failed: {0}")]
    RootBracketFailure(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("radius must be strictly positive for this reformulation")]
    ZeroRadius,
    #[error("tracking exponent must be 1 or 2, got {0}")]
    BadP(u32),
    #[error("piecewise loss needs at least one piece")]
    EmptyPieces,
    #[error("constraint matrices are linearly dependent")]
    SingularConstraintGram,
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverDidNotConverge { iterations: usize, residual: f64 },
    #[error("problem exceeds solver size limit: {0}")]
    TooLarge(String),

    #[error("feasible set is empty: {0}")]
    InfeasibleSet(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("missing value at row {row}, column {column}")]
    MissingValue { row: usize, column: String },
    #[error("dates not strictly increasing at row {row}")]
    NonMonotoneDates { row: usize },
    #[error("panel too short: need {needed} rows, have {got}")]
    TooShortPanel { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse { row, column: String::new(), message: e.to_string() }
    }
}
