//! Configuration, file formats and pipeline orchestration behind the
//! `countquant` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;
pub use pipeline::{Pipeline, Stage};
