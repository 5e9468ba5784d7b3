//! Crate-wide error type with CLI exit-code mapping.

use std::path::PathBuf;

use thiserror::Error;

/// Exit codes used by the command-line front end.
///
/// 0 success, 2 config/validation error, 3 data-format error,
/// 4 calibration failure.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CALIBRATION: i32 = 4;

#[derive(Debug, Error)]
pub enum Error {
    // --- config / validation ---
    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing {role} path: {path}")]
    MissingInput { role: &'static str, path: PathBuf },

    #[error("invalid masking config: {0}")]
    InvalidMaskConfig(String),

    #[error("empty score sample")]
    EmptySample,

    // --- data format ---
    #[error("empty seed class: {path}")]
    EmptySeedClass { path: PathBuf },

    #[error("word in both classes: {word}")]
    WordInBothClasses { word: String },

    #[error("{path}:{line}: multi-word entry {entry:?}")]
    MultiWordEntry {
        path: PathBuf,
        line: usize,
        entry: String,
    },

    #[error("{path}: malformed header: {detail}")]
    EmbeddingHeader { path: PathBuf, detail: String },

    #[error("{path}: line {line}: {detail}")]
    EmbeddingRow {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("vocab missing special token {token}")]
    VocabMissingSpecial { token: &'static str },

    #[error("duplicate vocab token {token:?} at lines {first_line} and {second_line}")]
    VocabDuplicate {
        token: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("{path}: line {line}: empty vocab token")]
    VocabEmptyToken { path: PathBuf, line: usize },

    #[error("{path}: invalid model file: {detail}")]
    ModelFormat { path: PathBuf, detail: String },

    #[error("{path}: line {line}: {detail}")]
    ScoresFile {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("{path}: line {line}: {detail}")]
    Jsonl {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("unknown fixture {name:?}")]
    UnknownFixture { name: String },

    #[error("fixture {name:?} checksum mismatch: expected {expected}, got {actual}")]
    FixtureChecksum {
        name: String,
        expected: String,
        actual: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // --- scorer ---
    #[error("class has no embedded words: {class}")]
    ClassNoEmbeddedWords { class: &'static str },

    #[error("degenerate training set")]
    DegenerateTrainingSet,

    #[error("non-finite score: {0}")]
    NonFiniteScore(f64),

    // --- calibration ---
    #[error(
        "unreachable target rate {target}: achievable range [{lo}, {hi}] on this sample"
    )]
    UnreachableTargetRate { target: f64, lo: f64, hi: f64 },
}

impl Error {
    /// Map the error to the CLI exit code contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::MissingInput { .. }
            | Error::InvalidMaskConfig(_)
            | Error::EmptySample => EXIT_CONFIG,
            Error::UnreachableTargetRate { .. } => EXIT_CALIBRATION,
            _ => EXIT_DATA,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
