//! Scenario loading, experiment execution, the analytic overlay and the
//! output files behind the `iotscan` command line.

mod dissect;
mod experiment;
mod scenario;

use thiserror::Error;

pub use dissect::{dissect, format_for_name, parse_hex};
pub use experiment::{
    compare, manifest, run_experiment, run_experiment_with, run_model, run_trial, write_comparison,
    write_experiment, write_model, CompareReport, CompareRow, ExperimentResult, ModelTable,
    RunOptions, TrialResult, COMPARE_PASS_FRACTION,
};
pub use scenario::{
    parse_address, Algorithm, ChannelEntry, DeviceEntry, EnvironmentSection, ModelConfig,
    Scenario, ScenarioConfig, StageEntry,
};

use crate::analytics::AnalyticsError;
use crate::frame_codec::CodecError;
use crate::radio_sim::SimError;
use crate::scanner::ScanError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("{0}")]
    Input(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("writing {path}: {message}")]
    Csv { path: String, message: String },
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}
