//! Command-line front end for the forecast market: scenario files in and
//! settlement tables, property records, and plot data out.
//!
//! A scenario is a TOML file describing one market session in one of
//! three modes: `scores` (settle directly from published oriented scores,
//! for table reproductions), `single` (full report-driven session with
//! one observed outcome), or `hourly` (a day-ahead style run where each
//! hour is its own session, with quantile forecasts and observations
//! ingested from CSV). Scenarios may embed expected values; runs verify
//! them and fail with the property-check exit code when they drift.
//!
//! Exit codes: `0` success, `1` validation error (bad flags, malformed
//! scenario or CSV), `2` property-check failure (a property or embedded
//! expectation did not hold), `3` I/O error.

pub mod cli;
pub mod hourly;
pub mod run;
pub mod scenario;

use forecast_market::{AggError, DistError, MarketError, PropError, ScoreError};

/// Errors carrying the process exit code they map to.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    /// Malformed inputs: scenario, CSV, or flag values. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// A property check or embedded expectation failed. Exit code 2.
    #[error("{0}")]
    PropertyFailure(String),
    /// Filesystem trouble. Exit code 3.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::PropertyFailure(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DistError> for CliError {
    fn from(e: DistError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<AggError> for CliError {
    fn from(e: AggError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PropError> for CliError {
    fn from(e: PropError) -> Self {
        CliError::Validation(e.to_string())
    }
}
