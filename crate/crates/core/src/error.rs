use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// Variants are grouped by how a caller is expected to react: input
/// validation problems, numerical failures, and missing upstream artifacts.
/// [`Error::kind`] exposes that grouping for exit-code mapping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing required column `{column}`")]
    MissingColumn { column: String },

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("unknown skill `{skill}` (line {line}) not present in the fixed vocabulary")]
    UnknownSkill { skill: String, line: u64 },

    #[error("conflicting labels for student id(s): {}", ids.join(", "))]
    LabelConflict { ids: Vec<String> },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss is undefined: the batch contains no next-step targets")]
    UndefinedLoss,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("feature `{feature}` is not finite")]
    NonFiniteFeature { feature: String },

    #[error("schema mismatch: expected [{}], got [{}]", expected.join(","), found.join(","))]
    SchemaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate variance: samples have zero pooled variance but different means")]
    DegenerateVariance,

    #[error("normalized learning gain undefined: pre-score is 1")]
    UndefinedNlg,

    #[error("missing artifact {}: run `{command}` first", path.display())]
    MissingArtifact { path: PathBuf, command: String },

    #[error("grid point {index} ({spec}): {source}")]
    GridPoint {
        index: usize,
        spec: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the command-line driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Dependency,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Diverged { .. }
            | Error::UndefinedLoss
            | Error::DegenerateVariance
            | Error::UndefinedNlg => ErrorKind::Numerical,
            Error::MissingArtifact { .. } => ErrorKind::Dependency,
            Error::GridPoint { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn format(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            message: message.into(),
        }
    }
}
