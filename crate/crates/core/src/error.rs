use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the estimators can report.
///
/// Messages lead with the variant name so they can be matched by scripts
/// reading the CLI's stderr.
#[derive(Debug, Error)]
pub enum Error {
    #[error("MissingColumn: column `{0}` not found in header")]
    MissingColumn(String),

    #[error("NonNumericCell: row {row}, column `{column}`: `{value}`")]
    NonNumericCell { row: usize, column: String, value: String },

    #[error("EmptyFile: no header or no data rows")]
    EmptyFile,

    #[error("RowWithMissingValue: row {row}, column `{column}` (pass --drop-na to skip such rows)")]
    RowWithMissingValue { row: usize, column: String },

    #[error("InvalidDataset: {0}")]
    InvalidDataset(String),

    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),

    #[error("GridTooSmall: grid size {0} is below the minimum of 3")]
    GridTooSmall(usize),

    #[error("GridMismatch: process fitted on {fitted} observations, data has {data}")]
    GridMismatch { fitted: usize, data: usize },

    #[error("OutOfGridRange: level {eta} outside [{lo}, {hi}]")]
    OutOfGridRange { eta: f64, lo: f64, hi: f64 },

    #[error("EmptyInput: {0} is empty")]
    EmptyInput(&'static str),

    #[error("RankDeficientDesign: design matrix does not have full column rank")]
    RankDeficientDesign,

    #[error("SolverDivergence: no convergence after {iterations} iterations (relative gap {gap:e})")]
    SolverDivergence { iterations: usize, gap: f64 },

    #[error("ScaleNonPositive: 1 + theta * x1 = {0} is not positive")]
    ScaleNonPositive(f64),

    #[error("DegenerateSample: sample standard deviation is zero")]
    DegenerateSample,

    #[error("ZeroWeightMass: all kernel weights vanished at the evaluation point")]
    ZeroWeightMass,

    #[error("SingularLocalDesign: weighted local design is singular")]
    SingularLocalDesign,

    #[error("ZeroDensity: estimated density {0:e} at the quantile is numerically zero")]
    ZeroDensity(f64),

    #[error("SeparationDetected: logit coefficients diverge (perfect separation)")]
    SeparationDetected,

    #[error("DegenerateIndicator: 1{{y > q}} has a single class")]
    DegenerateIndicator,

    #[error("ReplicateFailure: bootstrap replicate {replicate} failed twice: {cause}")]
    ReplicateFailure { replicate: usize, cause: Box<Error> },

    #[error("OracleNotConverged: band sensitivity {0:.5} exceeds 0.005")]
    OracleNotConverged(f64),

    #[error("InvalidReport: {0}")]
    InvalidReport(String),

    #[error("NumericalInvariant: {0}")]
    NumericalInvariant(String),

    #[error("at eta = {eta}: {source}")]
    AtLevel { eta: f64, source: Box<Error> },

    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error("Io: {0}")]
    Io(#[from] std::io::Error),

    #[error("Csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a pipeline stage label.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage and level labels peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::AtLevel { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for bad input (files, flags, data shape); false for numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::MissingColumn(_)
                | Error::NonNumericCell { .. }
                | Error::EmptyFile
                | Error::RowWithMissingValue { .. }
                | Error::InvalidDataset(_)
                | Error::InvalidArgument(_)
                | Error::GridTooSmall(_)
                | Error::GridMismatch { .. }
                | Error::OutOfGridRange { .. }
                | Error::EmptyInput(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

pub(crate) fn check_level(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} = {value} must lie strictly inside (0, 1)"
        )))
    }
}
