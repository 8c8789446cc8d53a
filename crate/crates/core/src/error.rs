//! Crate-wide error type.

use thiserror::Error;

/// Unified error for dataset handling, prompt construction, backends, and the
/// experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    /// The CSV header, a cell value, or a pair of schemas disagrees with a
    /// schema manifest. The message lists the offending columns.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// A cell in a numeric column could not be parsed as a number.
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    CellParse {
        row: usize,
        column: String,
        value: String,
    },

    /// A class does not have enough rows to draw the requested split.
    #[error("class {class:?} has {available} rows available, need {needed}")]
    InsufficientClassRows {
        class: String,
        available: usize,
        needed: usize,
    },

    /// A row had no renderable cells, so no question can be built from it.
    #[error("row has no usable cells")]
    EmptyRow,

    /// A renderer needed a value for this column but the cell is missing.
    #[error("row has no value for column {0:?}")]
    MissingValue(String),

    /// The segment sequence matches none of the sanctioned prompt layouts.
    #[error("prompt segments match no sanctioned composition: {0}")]
    Composition(String),

    /// A replay backend (or an offline prompt dump) needed a completion that
    /// is not in the store.
    #[error("no completion recorded for cache key {key}")]
    ReplayMiss { key: String },

    /// The HTTP backend failed on every attempt.
    #[error("backend unavailable after {attempts} attempt(s): {detail}")]
    BackendUnavailable { attempts: u32, detail: String },

    /// The HTTP backend answered, but not with a usable completion body.
    /// Never retried: only transport failures are.
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),

    /// The source schema offers no feature that could serve as a pseudo-label.
    #[error("source schema offers no candidate features")]
    NoCandidateFeatures,

    /// No source row is eligible for pseudo-demonstration construction.
    #[error("no source rows eligible for pseudo-demonstrations")]
    EmptyPseudoSet,

    /// A configuration value or combination is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The projected token spend crossed the configured budget.
    #[error("estimated token budget exceeded: {estimated} > {budget}")]
    BudgetExceeded { estimated: u64, budget: u64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Helper for wrapping I/O failures with the path that caused them.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Helper for wrapping serde failures with a short context label.
    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
