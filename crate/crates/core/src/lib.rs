//! Component-aware structured pruning for small multi-component networks.
//!
//! The crate trains dense networks with exact reverse-mode gradients and, while
//! training, tracks three per-group importance signals derived from task-loss
//! gradients: mean absolute gradient, a diagonal Fisher estimate, and an
//! empirical-Bayes score built on a Gamma posterior over gradient energies.
//! Groups are either specific to one component (encoder, decoder, head) or
//! couple two components across their shared interface. A phase-offset cosine
//! schedule drives per-group L1 pressure, and the pruner turns smoothed
//! importances into shape-consistent unit removals.
//!
//! Everything here is `no_std` + `alloc`; file formats and the CLI live in the
//! `prunescope` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod hypotheses;
pub mod importance;
pub mod matrix;
pub mod modelgraph;
pub mod netcore;
pub mod presets;
pub mod pruner;
pub mod scheduler;
pub mod trace;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
