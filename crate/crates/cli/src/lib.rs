//! Experiment driver and command-line front end for `replicator-core`.
//!
//! [`config`] defines the TOML experiment schema, [`run`] executes it and
//! writes the artifact tree, and [`commands`] implements the subcommands of
//! the `replicator` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use error::CliError;
