use thiserror::Error;

/// Errors produced anywhere in the fixation-modelling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed row at line {line}: field `{field}`: {message}")]
    Malformed {
        line: usize,
        field: &'static str,
        message: String,
    },

    #[error("unknown {kind} token `{token}` at line {line}")]
    UnknownToken {
        line: usize,
        kind: &'static str,
        token: String,
    },

    #[error("non-positive duration at line {line}")]
    NonPositiveDuration { line: usize },

    #[error("duplicate fixation: subject {subject}, image {image}, index {index}")]
    DuplicateFixation {
        subject: String,
        image: u32,
        index: u32,
    },

    #[error("subject {subject} has no sequence for image {image} ({scheme})")]
    MissingSubject {
        subject: String,
        image: u32,
        scheme: String,
    },

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("degenerate cluster: {0}")]
    DegenerateCluster(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("bandwidth root not bracketed: {0}; fall back to the normal-reference bandwidth")]
    BandwidthBracket(String),

    #[error("image {image} ({scheme}): need at least {need} subjects, found {got}")]
    InsufficientSubjects {
        image: u32,
        scheme: String,
        need: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
