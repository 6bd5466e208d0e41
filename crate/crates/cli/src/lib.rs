//! Scenario files, output documents and command implementations behind the
//! `influence-game` binary.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

pub use error::CliError;
