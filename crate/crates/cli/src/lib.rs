//! Command-line driver: dataset preparation, embedding training, classifier
//! training, evaluation and prediction.

pub mod commands;
pub mod settings;

pub use commands::{error_line, exit_code, run, Cli};
