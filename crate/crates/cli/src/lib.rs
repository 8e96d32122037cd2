//! Command-line front end for `tcf-core`: file formats, a thread-pool
//! executor, report rendering and the `tcf` commands.

pub mod cli;
pub mod commands;
pub mod error;
pub mod exec;
pub mod io;
pub mod report;

pub use error::{CliError, Result};
