//! Configuration-driven experiment runner: closed-loop simulation, value
//! tables, structural checks and convergence studies, with CSV and JSONL
//! output.

pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod registry;

pub use commands::{cmd_check, cmd_simulate, cmd_study, cmd_value};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
