//! Scenario runner for the `levy-filter` engine: config parsing, the
//! simulate → filter → diagnose pipeline, result files and deterministic
//! replay.

pub mod config;
pub mod error;
pub mod replay;
pub mod run;

pub use config::{Diagnostic, ScenarioConfig};
pub use error::CliError;
pub use replay::{replay, ReplayReport};
pub use run::{run_scenario, Manifest, Report, RunOutcome};

/// Directory of the bundled scenario configs.
pub fn scenarios_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}
