use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("malformed stream line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("history unseen: \"{history}\"")]
    HistoryUnseen { history: String },

    #[error("back-off mass exhausted for history \"{history}\"")]
    BackoffMassExhausted { history: String },

    #[error("zero-probability token \"{word}\" at stream position {position}")]
    ZeroProbability { position: usize, word: String },

    #[error("annotation does not match corpus: {reason}")]
    MismatchedCorpus { reason: String },

    #[error("topic {topic} out of range (model has {n_topics} topics)")]
    TopicOutOfRange { topic: usize, n_topics: usize },

    #[error("unknown benchmark method \"{name}\"")]
    UnknownMethod { name: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing baseline for topics {0:?}")]
    MissingBaselines(Vec<usize>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
