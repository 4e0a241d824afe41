use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    /// Every violated invariant, one entry per violation.
    #[error("network validation failed with {} violation(s): {}", .0.len(), .0.join("; "))]
    Validation(Vec<String>),

    #[error("progress {progress} m outside [0, {length}] on lane {lane}")]
    ProgressOutOfRange {
        lane: u32,
        progress: f64,
        length: f64,
    },

    #[error("invalid maneuver: {0}")]
    InvalidManeuver(String),

    #[error("unknown decision point {0}")]
    UnknownDecisionPoint(u32),

    #[error("vehicle {vehicle} is not at decision point {decision_point}")]
    NotAtDecisionPoint { vehicle: u32, decision_point: u32 },

    #[error("vehicle {0} not present in scene")]
    UnknownVehicle(u32),

    #[error("feature spec mismatch: model uses {model:?}, featurizer produces {featurizer:?}")]
    FeatureSpecMismatch { model: String, featurizer: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("enumeration exceeds the cap of {cap} maneuver sequences")]
    EnumerationCap { cap: u64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
