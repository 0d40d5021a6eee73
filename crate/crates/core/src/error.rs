use std::path::PathBuf;

use thiserror::Error;

use crate::model::Coord;

/// Violations of the project data model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// `field` names the offending entry, e.g. `omega_l[0][1]`.
    #[error("{field}: {rule}")]
    Invalid { field: String, rule: String },
    #[error("{0} is not a tunable dependency")]
    NotTunable(Coord),
    #[error("{coord}: value {value} outside [{lo}, {hi}]")]
    OutOfBox {
        coord: Coord,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

impl ModelError {
    pub(crate) fn invalid(field: impl Into<String>, rule: impl Into<String>) -> Self {
        ModelError::Invalid {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    /// Neither power iteration nor the dense fallback produced a Perron pair
    /// passing the residual checks.
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    /// Even full investment leaves the feasibility index above the target.
    #[error("target {target} unreachable: full investment gives {best}")]
    Infeasible { target: f64, best: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetgenError {
    #[error("invalid graph parameters: {0}")]
    InvalidParams(String),
    #[error("cannot calibrate: feasibility index stays at {max_rho} < 1 up to scale {max_scale}")]
    Uncalibratable { max_rho: f64, max_scale: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}:{line}:{column}: {message}")]
    MalformedFile {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invariant violation in {field}: {rule}")]
    InvariantViolation { field: String, rule: String },
    #[error("refusing to overwrite {0} (pass the overwrite flag)")]
    WouldOverwrite(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<ModelError> for IoError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Invalid { field, rule } => IoError::InvariantViolation { field, rule },
            other => IoError::InvariantViolation {
                field: "allocation".into(),
                rule: other.to_string(),
            },
        }
    }
}
