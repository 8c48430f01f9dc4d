//! File formats, experiment orchestration and the command-line front end for
//! `prunescope-core`.
//!
//! - [`idx`]: the IDX image/label container.
//! - [`checkpoint`]: bit-exact JSON checkpoints.
//! - [`config`]: experiment configuration files.
//! - [`trace_io`]: trace CSV and JSON.
//! - [`experiment`]: train, fine-tune and prune runs and their output files.
//! - [`cli`]: the `prunescope` command.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod idx;
pub mod trace_io;

pub use error::{AppError, Result};
pub use prunescope_core as core;
