//! Scenario runner, demos and file output behind the `nnreach` binary.

pub mod demo;
pub mod output;
pub mod run;
pub mod scenario;

use std::fmt::Display;
use std::path::Path;

use nnreach::reach::ReachError;
use nnreach::systems::SystemsError;
use thiserror::Error;

pub use demo::{demo, DEMOS};
pub use run::{run_file, run_scenario, Outcome, RunReport};
pub use scenario::{FrameworkChoice, Scenario, TemplateSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("malformed scenario: {0}")]
    Scenario(String),
    #[error("scenario field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Reach(#[from] ReachError),
    #[error(transparent)]
    Systems(#[from] SystemsError),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown demo {0:?}; expected one of {list}", list = DEMOS.join(", "))]
    UnknownDemo(String),
    #[error("{framework} result violated by a sampled trajectory at t={t} (by {violation:e})")]
    Unsound { framework: &'static str, t: usize, violation: f64 },
}

impl CliError {
    pub fn field(field: &str, msg: impl Display) -> Self {
        CliError::Field { field: field.into(), msg: msg.to_string() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}
