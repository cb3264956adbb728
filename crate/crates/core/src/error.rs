use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("trajectory fidelity error: {0}")]
    Fidelity(String),

    #[error("training fault: {0}")]
    TrainingFault(String),

    #[error(transparent)]
    Net(#[from] sketchnet::NetError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract_violation",
            Error::Config(_) => "configuration",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::Fidelity(_) => "fidelity",
            Error::TrainingFault(_) => "training_fault",
            Error::Net(sketchnet::NetError::TrainingFault(_)) => "training_fault",
            Error::Net(sketchnet::NetError::CheckpointCorrupt(_)) => "checkpoint_corrupt",
            Error::Net(sketchnet::NetError::Shape(_)) => "shape_mismatch",
            Error::Net(sketchnet::NetError::StaleCache(_)) => "contract_violation",
            Error::Net(sketchnet::NetError::Io(_)) | Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
