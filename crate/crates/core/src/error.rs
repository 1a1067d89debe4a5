use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has zero norm")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),

    #[error("invalid corpus statistics: {0}")]
    InvalidStats(String),

    #[error("unknown document id `{0}`")]
    UnknownDocId(String),

    #[error("too few points: need {needed}, have {available}")]
    TooFewPoints { needed: usize, available: usize },

    #[error("vector is not unit length (norm {norm})")]
    NotUnit { norm: f64 },

    #[error("node has no entries")]
    EmptyNode,

    /// k-means could not separate the entries of an overflowing node.
    #[error("degenerate node split")]
    DegenerateSplit,

    #[error("level {level} is outside 1..={depth}")]
    BadLevel { level: usize, depth: usize },

    #[error("format error{}: {message}", .offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Format {
        offset: Option<usize>,
        message: String,
    },

    #[error("contingency table is empty")]
    EmptyTable,

    #[error("too few clusters: need {needed}, codebook has {available}")]
    TooFewClusters { needed: usize, available: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("no label for document `{0}`")]
    MissingLabel(String),

    #[error("dimension sets differ between reports")]
    DimensionSetMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("document `{doc_id}`: {source}")]
    Document {
        doc_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_document(self, doc_id: &str) -> Self {
        Error::Document {
            doc_id: doc_id.to_owned(),
            source: Box::new(self),
        }
    }

    pub(crate) fn format(offset: Option<usize>, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
