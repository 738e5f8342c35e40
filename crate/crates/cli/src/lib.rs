//! Configuration, presets, output files and batch running for the `fdi`
//! command-line tool.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{load_config, ConfigError, ScenarioConfig};
pub use presets::preset;
pub use run::{batch, run, validate_only, BatchItem, RunError, RunSummary, ValidationOutcome};
