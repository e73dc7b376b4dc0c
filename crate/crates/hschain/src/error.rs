use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    /// Data-contract violations: duplicate ids, bad labels, malformed model files.
    #[error("{0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("sample produced zero points; cannot estimate densities")]
    EmptySample,

    #[error("sketch length {got} does not match projection dimension {expected}")]
    SketchLength { expected: usize, got: usize },

    #[error("duplicate key in collect_as_map: {0}")]
    DuplicateKey(String),

    /// A user function failed inside an engine stage.
    #[error("stage {stage}, partition {partition}, element {index}: {msg}")]
    Stage {
        stage: String,
        partition: usize,
        index: usize,
        msg: String,
    },

    #[error("model file: {0}")]
    Model(String),

    #[error("metric: {0}")]
    Metric(String),
}

impl Error {
    /// CLI exit code: 0 ok, 1 usage, 2 data error, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Stage { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }
}
