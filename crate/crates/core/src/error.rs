use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid record at line {line}: {message}")]
    InvalidRecord { line: usize, message: String },

    #[error("unsupported schema {found:?} (expected {expected:?})")]
    Schema { expected: String, found: String },

    #[error("frame range {start}..{end} out of bounds for sequence of {len} frames")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },

    #[error("frame {got} presented after frame {last}; frames must be strictly increasing")]
    OutOfOrderFrame { last: usize, got: usize },

    #[error("invalid tracker parameters: {0}")]
    InvalidParams(String),

    #[error("sequence has no annotations")]
    MissingAnnotations,

    #[error("segment unlearnable: {0}")]
    Unlearnable(String),

    #[error("degenerate training set: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// True for problems with the caller's input (files, flags, config)
    /// rather than a failure inside a processing stage.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidRecord { .. }
            | Error::Schema { .. }
            | Error::RangeOutOfBounds { .. }
            | Error::OutOfOrderFrame { .. }
            | Error::InvalidParams(_)
            | Error::MissingAnnotations
            | Error::UnknownScenario(_)
            | Error::Json(_)
            | Error::Config(_) => true,
            Error::Unlearnable(_)
            | Error::Degenerate(_)
            | Error::Empty(_)
            | Error::Infeasible(_) => false,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
