//! Batch pipeline behind the `escapekit` binary: simulate, learn, solve,
//! compare and oracle, each driven by a [`RunConfig`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;

pub mod commands;
pub mod config;

pub use commands::{compare, learn, oracle, run, simulate, solve, Command, ModelSource, Overrides};
pub use config::RunConfig;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad arguments, unreadable or inconsistent configuration, missing inputs.
    Usage,
    /// The numerics failed: blow-up, rank deficiency, non-convergence.
    Numerical,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: FailureKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: FailureKind::Usage,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            kind: FailureKind::Numerical,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Usage => 1,
            FailureKind::Numerical => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<escapekit::Error> for CliError {
    fn from(e: escapekit::Error) -> Self {
        use escapekit::Error as E;
        let kind = match &e {
            E::BlowUp { .. }
            | E::TooFewSamples { .. }
            | E::RankDeficient { .. }
            | E::CrossTalk { .. }
            | E::NoiseStructure(_)
            | E::SaddleSearch(_)
            | E::Singular(_)
            | E::NoConvergence { .. } => FailureKind::Numerical,
            _ => FailureKind::Usage,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(format!("i/o error: {e}"))
    }
}
