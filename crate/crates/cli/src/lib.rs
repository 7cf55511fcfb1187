//! Command-line driver for output-constrained BNNs: run configs, the
//! `generate | infer | predict | eval | experiment` subcommands and the named
//! experiments.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod pipeline;

use ocbnn_core::Error;

/// Process exit code for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical { .. } => 3,
        _ => 2,
    }
}
