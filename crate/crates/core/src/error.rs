use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented range.
    #[error("invalid config `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    /// The config document could not be parsed.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("target count {k} out of range (1..={max})")]
    TargetCount { k: usize, max: usize },

    #[error("duplicate target cell {0}")]
    DuplicateCell(usize),

    #[error("cell index {index} out of range for a grid of {n} cells")]
    CellOutOfRange { index: usize, n: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("snapshot count must be at least 1")]
    NoSnapshots,

    #[error("measurement model mismatch: expected {expected}, got {actual}")]
    ModelMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("zero measurement")]
    ZeroMeasurement,

    #[error("observation matrix has no nonzero column")]
    EmptyDictionary,

    #[error("solver: {0}")]
    Solver(String),

    #[error("combinatorial budget exceeded: C({n}, {k}) > {budget}")]
    Budget { n: usize, k: usize, budget: u64 },

    #[error("insufficient anchors: {usable} usable, at least 3 required")]
    InsufficientAnchors { usable: usize },

    #[error("collinear anchor geometry")]
    CollinearAnchors,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig { .. }
                | Error::ConfigParse(_)
                | Error::TargetCount { .. }
                | Error::Geometry(_)
        )
    }
}
