use thiserror::Error;

use crate::harness::SimLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the domain of a pure function (non-finite value,
    /// time outside the load profile, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value failed validation. `field` is the dotted path
    /// into the JSON document.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical divergence: {variable} became non-finite at t = {t} s")]
    Divergence { variable: &'static str, t: f64 },

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("export error: {0}")]
    Export(String),

    /// The simulation stopped early. The log holds every row recorded
    /// before the failure.
    #[error("run aborted at t = {t} s: {reason}")]
    RunAborted {
        t: f64,
        reason: String,
        log: Box<SimLog>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
