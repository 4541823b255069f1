//! Library surface of the command-line harness, exposed so integration tests
//! can drive the same code paths as the binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_compare, cmd_sweep, cmd_train, cmd_verify, CliError, SEED_ENV_VAR};
pub use config::{load_config, parse_config, ConfigError, EnvScenario, EnvSpec, RunConfig, Topology};
pub use output::{steps_csv, write_outputs, FinalMetrics, RunRecord};
