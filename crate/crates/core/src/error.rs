use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {source_name} at line {line}: {message}")]
    Format {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("format error at byte offset {offset}: {message}")]
    Corrupt { offset: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("could not place {requested} objects after {attempts} attempts (placed {placed})")]
    Placement {
        requested: usize,
        placed: usize,
        attempts: usize,
    },
    #[error("no unique referring expression for {target}; candidates {candidates:?}")]
    NonUnique {
        target: String,
        candidates: Vec<String>,
    },
    #[error("generation infeasible: {0}")]
    Infeasible(String),
    #[error("partial generation: {0}")]
    PartialGeneration(String),
    #[error("extraction error: {0}")]
    Extraction(String),
    #[error("naming scene must contain exactly one object, found {0}")]
    NamingScene(usize),
    #[error("memory store error: {0}")]
    Store(String),
    #[error("memory file version {found} cannot be read by version {expected}")]
    Migration { found: u32, expected: u32 },
    #[error("unknown instance {0}")]
    UnknownInstance(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
