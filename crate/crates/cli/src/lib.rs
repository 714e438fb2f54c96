//! Experiment front end: configuration, run orchestration, comparison reports.

pub mod compare;
pub mod config;
pub mod runs;

use opnet_core::Error;

pub use config::ExperimentConfig;
pub use runs::{RunEntry, RunManifest, RunStatus};

/// Exit statuses of the `opnet` binary.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const GENERATION: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    pub const COMPARISON: i32 = 5;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Train,
    Evaluate,
    Compare,
}

/// Maps an error raised during `stage` to the process exit status.
pub fn exit_code(stage: Stage, err: &Error) -> i32 {
    match (stage, err) {
        (_, Error::Config(_) | Error::Truncation { .. }) => exit::CONFIG,
        (_, Error::Divergence { .. }) => exit::DIVERGENCE,
        (Stage::Generate, Error::Io(_)) => exit::FAILURE,
        (Stage::Generate, _) => exit::GENERATION,
        (
            Stage::Compare,
            Error::Pairing(_)
            | Error::InsufficientData { .. }
            | Error::DegenerateDispersion
            | Error::UndefinedCorrelation
            | Error::UndefinedMetric(_),
        ) => exit::COMPARISON,
        _ => exit::FAILURE,
    }
}
