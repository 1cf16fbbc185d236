use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("relative error undefined: actual value {value} at case {index} is not positive")]
    Divisor { index: usize, value: f64 },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),

    #[error("degenerate control: standard deviation is zero")]
    DegenerateControl,

    #[error("degenerate feature: {0}")]
    DegenerateFeature(String),

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("all paired differences are zero; signed-rank test undefined")]
    AllDifferencesZero,

    #[error("evaluation sets differ: {0}")]
    MismatchedEvaluationSet(String),

    #[error("pairing mismatch: {0}")]
    MismatchedPairing(String),

    #[error("preference cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),

    #[error("conflicting verdicts for {0} and {1}")]
    ConflictingVerdicts(String, String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("fit failed in fold {fold}: {source}")]
    FoldFit {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// True for the statistical degeneracies the CLI reports with a dedicated exit code.
    pub fn is_degenerate(&self) -> bool {
        match self {
            Error::DegenerateBaseline(_)
            | Error::DegenerateControl
            | Error::DegenerateFeature(_)
            | Error::AllDifferencesZero => true,
            Error::FoldFit { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
