use std::fmt;
use std::path::PathBuf;

/// Pipeline stage an error surfaced from, used to tag diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Corpus,
    Names,
    Augment,
    Embed,
    Retrieval,
    Stats,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Corpus => "corpus",
            Stage::Names => "names",
            Stage::Augment => "augment",
            Stage::Embed => "embed",
            Stage::Retrieval => "retrieval",
            Stage::Stats => "stats",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: field `{field}`: {message}")]
    MalformedRow {
        row: u64,
        field: String,
        message: String,
    },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("no categories survive filtering")]
    NoCategories,

    #[error("document `{id}` is not a {expected}")]
    WrongKind { id: String, expected: &'static str },

    #[error("name `{first}` ({group}): {rule}")]
    InvalidName {
        first: String,
        group: String,
        rule: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("group {group} has {available} candidates, {needed} needed")]
    InsufficientCandidates {
        group: String,
        needed: usize,
        available: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unbalanced comparison pool: {0}")]
    Unbalanced(String),

    #[error("transport failure for {} text(s) at indices {failed:?}: {message}", failed.len())]
    Transport { failed: Vec<usize>, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("sample too small: need at least {needed}, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("incomplete report: {0}")]
    Incomplete(String),

    #[error("cannot summarize reports of different experiment types: {0}")]
    MixedExperiments(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The pipeline stage, if this error was tagged with one.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| match e {
            tagged @ Error::Stage { .. } => tagged,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        })
    }
}
