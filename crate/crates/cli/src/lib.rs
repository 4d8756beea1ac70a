//! Experiment configuration, presets and output writing for the `simulate`
//! binary.

pub mod config;
pub mod presets;
pub mod runner;

pub use config::{
    parse_config, read_config, serialize, ConfigError, ExperimentKind, ExperimentSpec, Sweep,
};
pub use runner::{run_experiment, RunError};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "EHSCHED_OUT_DIR";
