//! Command-line frontend for `nvsense-core`: run configuration, file formats
//! and subcommands. The binary is a thin wrapper around [`cli::run`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod formats;
