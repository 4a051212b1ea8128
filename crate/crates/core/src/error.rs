use thiserror::Error;

/// Errors raised anywhere in the estimation and simulation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric (|m[{row}][{col}] - m[{col}][{row}]| = {gap:e})")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design matrix is rank deficient (pivot {pivot} = {value:e})")]
    RankDeficient { pivot: usize, value: f64 },

    #[error("logistic fit diverged (quasi-complete separation): {0}")]
    Separation(String),

    #[error("IRLS did not converge after {iterations} iterations (max |step| = {last_step:e})")]
    NotConverged { iterations: usize, last_step: f64 },

    #[error("propensity {value} at row {index} is outside [1e-6, 1 - 1e-6]")]
    ExtremePropensity { index: usize, value: f64 },

    #[error("treatment group {0} is empty or has zero total weight")]
    EmptyGroup(&'static str),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("treatment score has zero variance (alpha' Sigma alpha = {0:e})")]
    DegenerateScore(f64),

    #[error("root is not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NoBracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("baseline mean difference is too small to solve for outcome coefficients ({0:e})")]
    ZeroSmd(f64),

    #[error("covariate set `{set}` is not valid for design {design}")]
    InvalidSet { set: String, design: String },

    #[error("need at least 2 successful replicates, got {0}")]
    TooFewReplicates(usize),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("log transform of non-positive value {value} in column `{column}` at line {line}")]
    NonPositiveLog {
        column: String,
        line: usize,
        value: f64,
    },

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag, used for replicate failure records.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::Dimension(_) => "dimension",
            Error::InvalidInput(_) => "invalid_input",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Separation(_) => "separation",
            Error::NotConverged { .. } => "not_converged",
            Error::ExtremePropensity { .. } => "extreme_propensity",
            Error::EmptyGroup(_) => "empty_group",
            Error::ZeroVariance(_) => "zero_variance",
            Error::DegenerateScore(_) => "degenerate_score",
            Error::NoBracket { .. } => "no_bracket",
            Error::ZeroSmd(_) => "zero_smd",
            Error::InvalidSet { .. } => "invalid_set",
            Error::TooFewReplicates(_) => "too_few_replicates",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::NonPositiveLog { .. } => "non_positive_log",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
