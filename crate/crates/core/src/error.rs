use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed {field} at line {line}: {message}")]
    Parse { line: usize, field: &'static str, message: String },
    #[error("invalid date at line {line}")]
    InvalidDate { line: usize },
    #[error("invalid sex token {token:?} at line {line}")]
    InvalidSex { line: usize, token: String },
    #[error("no concept survives the support filter")]
    EmptyVocabulary,
    #[error("record set is empty")]
    EmptyCohort,
    #[error("unknown {kind} {value:?}")]
    UnknownVariant { kind: &'static str, value: String },
    #[error("invalid truth spec: {0}")]
    InvalidSpec(String),
    #[error("labels contain a single class")]
    SingleClass,
    #[error("feature count mismatch: model expects {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} examples of each class for {folds}-fold cross validation, found {positives} positive and {negatives} negative")]
    TooFewForFolds {
        folds: usize,
        needed: usize,
        positives: usize,
        negatives: usize,
    },
    #[error("duplicate edge {disease}\t{symptom} at line {line}")]
    DuplicateEdge { line: usize, disease: String, symptom: String },
    #[error("reference graph is empty")]
    EmptyReference,
    #[error("demographics requested but no record carries age or sex")]
    MissingDemographics,
    #[error("{0}")]
    Unsupported(String),
    #[error("at least {needed} diseases are required, found {found}")]
    TooFewDiseases { needed: usize, found: usize },
    #[error("partition produced no subgroup")]
    EmptyPartition,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, field: &'static str, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
