use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown key `{0}` (pass allow_unknown_keys to ignore)")]
    UnknownKey(String),

    #[error("{location}: {message}")]
    Invalid { location: String, message: String },

    #[error("{location}: dangling reference to {kind} `{id}`")]
    Dangling {
        location: String,
        kind: &'static str,
        id: String,
    },

    #[error("cyclic property graph through `{0}`")]
    Cycle(String),

    #[error("joint state enumeration exceeded the cap of {cap} states")]
    EnumerationCap { cap: usize },

    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },

    #[error("question `{0}` has no compatible item/answer pair")]
    NoCompatiblePair(String),

    #[error("question `{question}` cannot use the uniform prior strategy: items {items:?} have zero versatility")]
    ZeroVersatility { question: String, items: Vec<String> },

    #[error("every item received zero prior weight")]
    ZeroPrior,

    #[error("malformed table for `{table}`: {message}")]
    MalformedTable { table: String, message: String },

    #[error("property `{property}`: parent state {state} has no feasible mass left after revision")]
    InfeasibleRow { property: String, state: String },

    #[error("item `{item}` is incompatible with every value of `{property}` given its parents")]
    IncompatibleItem { item: String, property: String },

    #[error("question `{0}` was already answered")]
    RepeatedQuestion(String),

    #[error("answer `{answer}` is not an answer of question `{question}`")]
    UnknownAnswer { question: String, answer: String },

    #[error("question `{0}`: no relevant item has positive posterior mass")]
    NoRelevantMass(String),

    #[error("brute-force oracle size {size} exceeds cap {cap}")]
    OracleTooLarge { size: usize, cap: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("stop target s={s} out of range 1..={n}")]
    StopOutOfRange { s: usize, n: usize },

    #[error("equivalent sample size must be positive, got {0}")]
    InvalidEss(f64),

    #[error("observation on a forbidden cell: {0}")]
    ForbiddenCell(String),

    #[error("all-zero pseudo-count row {row} in table for `{table}`")]
    ZeroRow { table: String, row: usize },

    #[error("reference set is empty")]
    EmptyReference,

    #[error("no sessions in log")]
    NoSessions,

    #[error("log line {line}: {message}")]
    Log { line: usize, message: String },

    #[error("answer source failed: {0}")]
    AnswerSource(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            location: location.into(),
            message: message.into(),
        }
    }
}
