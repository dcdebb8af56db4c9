use std::fmt;

use thiserror::Error;

/// Location of a problem inside a configuration file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigLocation {
    /// Dotted path to the offending item, e.g. `q_table.KnowMoney.ExerciseType[3]`.
    pub path: String,
    /// 1-based line in the source text, when it could be located.
    pub line: Option<usize>,
}

impl fmt::Display for ConfigLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.path),
            None => write!(f, "{}", self.path),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}:{column}: {message}")]
    Syntax {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{source_name}: {location}: {message}")]
    Invalid {
        source_name: String,
        location: ConfigLocation,
        message: String,
    },

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub(crate) fn syntax(source_name: &str, err: &serde_json::Error) -> Self {
        let message = err.to_string();
        // serde_json appends " at line X column Y"; the location is reported separately.
        let message = match message.rfind(" at line ") {
            Some(idx) => message[..idx].to_string(),
            None => message,
        };
        ConfigError::Syntax {
            source_name: source_name.to_string(),
            line: err.line(),
            column: err.column(),
            message,
        }
    }
}

/// Errors raised while generating or checking a money exercise.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExerciseError {
    #[error("exercise type {0} is outside 1..=6")]
    UnknownExerciseType(u8),

    #[error("object catalog is empty")]
    EmptyCatalog,

    #[error("submitted item of {cents} cents is not available in the wallet")]
    ItemNotInWallet { cents: u32 },

    #[error("trial {trial} is outside 1..={limit}")]
    TrialOutOfRange { trial: u8, limit: u8 },
}

/// Errors raised while driving a live session.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("session is finished ({0})")]
    Finished(String),

    #[error("an exercise is already outstanding; answer it first")]
    ExerciseOutstanding,

    #[error("no exercise is outstanding")]
    NoOutstandingExercise,

    #[error("expected trial {expected}, got {got}")]
    UnexpectedTrial { expected: u8, got: u8 },

    #[error(transparent)]
    Exercise(#[from] ExerciseError),

    #[error("event log has a gap: expected sequence {expected}, found {found}")]
    SequenceGap { expected: u64, found: u64 },

    #[error("event log is malformed: {0}")]
    MalformedLog(String),

    #[error("replay diverged at sequence {seq}: {detail}")]
    ReplayDiverged { seq: u64, detail: String },
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("invalid experiment: {0}")]
    Invalid(String),

    #[error("frames cannot be compared: {0}")]
    ShapeMismatch(String),

    #[error("empty metrics frame")]
    EmptyFrame,

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
