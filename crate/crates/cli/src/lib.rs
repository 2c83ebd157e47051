//! Library side of the `transporter` binary: configuration loading, command
//! runners, exit-code mapping and run manifests.

pub mod commands;
pub mod error;
pub mod manifest;

pub use commands::{execute, replay, Command, Outcome};
pub use error::{classify, ConfigError, ExitKind};
pub use manifest::RunManifest;
