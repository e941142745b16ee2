use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("integration step dt={dt} left the valid region at step {step}")]
    StepTooLarge { step: usize, dt: f64 },

    #[error("trajectory spans {available_days} days, {required_days} required")]
    HorizonTooShort {
        available_days: f64,
        required_days: f64,
    },

    #[error("invalid network degree k={k} for n={n}: k must be even and 2 <= k < n")]
    InvalidDegree { n: usize, k: usize },

    #[error("population {params} does not match network size {network}")]
    PopulationMismatch { params: usize, network: usize },

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<SimError>,
    },

    #[error("ensemble has no replicates")]
    EmptyEnsemble,

    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl SimError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        SimError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_replicate(self, replicate: usize) -> Self {
        SimError::Replicate {
            replicate,
            source: Box::new(self),
        }
    }
}
