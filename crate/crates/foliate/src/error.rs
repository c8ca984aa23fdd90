use foliate_core::Error as CoreError;

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("tolerance check failed: {0}")]
    Tolerance(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io(_) | CliError::Json(_) | CliError::Csv(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Tolerance(_) => EXIT_TOLERANCE,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Parse { .. }
            | CoreError::OutsideDomain { .. }
            | CoreError::Dimension { .. }
            | CoreError::WrongDistribution { .. }
            | CoreError::NotOrthonormal(_)
            | CoreError::InvalidParameter(_)
            | CoreError::Hypothesis(_)
            | CoreError::NotClosed(_)
            | CoreError::UnknownItem(_) => CliError::Input(msg),
            CoreError::Eval(_)
            | CoreError::NotPositiveDefinite
            | CoreError::DegeneratePlane(_)
            | CoreError::RankDeficient(_)
            | CoreError::ChartExit { .. }
            | CoreError::SpeedDrift { .. }
            | CoreError::NonFinite(_) => CliError::Numerical(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
