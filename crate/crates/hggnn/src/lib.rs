//! File formats, configuration and the `hggnn` command-line tool on top of
//! [`hggnn_core`].
//!
//! - [`events`]: tab-separated interaction logs.
//! - [`config`]: flat dotted-key TOML configuration.
//! - [`checkpoint`]: versioned binary parameter files.
//! - [`formats`]: graph, statistics, metric and epoch-log text files.
//! - [`pipeline`]: corpus loading and (optionally threaded) evaluation.
//! - [`cli`]: the subcommands.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod events;
pub mod formats;
pub mod pipeline;

pub use error::{AppError, Result};
