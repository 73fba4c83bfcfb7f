//! Synthetic laboratory around the `dipole-ident` library: problem files,
//! precomputation, simulated measurements, identification and field export.

pub mod cli;
pub mod commands;
pub mod error;
pub mod formats;
pub mod io;
pub mod settings;

pub use error::CliError;
