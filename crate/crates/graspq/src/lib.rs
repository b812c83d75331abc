//! Command-line harness around `graspq-core`: configuration files, training
//! logs, checkpoints, plots and the train / eval / ablate / plot commands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod frames;
pub mod plot;
pub mod trainlog;

pub use config::{ConfigError, RunConfig};
pub use error::{HarnessError, Result};
