use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}, row {row}, column {column}: invalid cell {value:?} ({reason})")]
    BadCell {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
        reason: &'static str,
    },

    #[error("{path}, row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("duplicate {kind} identifier {id:?}")]
    DuplicateId { kind: &'static str, id: String },

    #[error("column {0:?} not found")]
    MissingColumn(String),

    #[error("sample {0:?} has no metadata row")]
    MissingSample(String),

    #[error("label column {0:?} has a single distinct value; at least two classes are required")]
    SingleClass(String),

    #[error("class {0:?} has no samples")]
    EmptyClass(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("log-ratio design would hold {cells} cells, above the cap of {cap}; use lazy columns")]
    DesignTooLarge { cells: usize, cap: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Errors caused by the caller's inputs or flags, as opposed to failures
    /// during computation.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}
