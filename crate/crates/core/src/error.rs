use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DyadError>;

#[derive(Debug, Error)]
pub enum DyadError {
    /// A caller broke a precondition (dimension mismatch, non-symmetric input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The eigensolver failed to converge.
    #[error("eigensolver did not converge on a {n}x{n} matrix (max |entry| = {max_abs:.3e}, frobenius norm = {frobenius:.3e})")]
    EigenNonConvergence {
        n: usize,
        max_abs: f64,
        frobenius: f64,
    },

    /// A Gram-type matrix was too ill-conditioned to solve against.
    #[error("{what} is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { what: String, condition: f64 },

    #[error("fixed-point iteration diverged at iteration {iteration}: distance from start {distance:.3e} exceeds {limit:.3e}")]
    Divergence {
        iteration: usize,
        distance: f64,
        limit: f64,
    },

    #[error("individual effects are degenerate: estimated effect variance {0:.3e} is too small")]
    DegenerateEffects(f64),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed edge-list input.
    #[error("{}", fmt_ingestion(.line, .message))]
    Ingestion {
        line: Option<u64>,
        message: String,
    },

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_ingestion(line: &Option<u64>, message: &str) -> String {
    match line {
        Some(line) => format!("ingestion error at line {line}: {message}"),
        None => format!("ingestion error: {message}"),
    }
}

/// Broad classes used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Estimation,
    Io,
}

impl DyadError {
    pub fn contract(msg: impl Into<String>) -> Self {
        DyadError::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DyadError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            DyadError::Config(_) | DyadError::Ingestion { .. } => ErrorClass::Config,
            DyadError::Io { .. } => ErrorClass::Io,
            DyadError::Contract(_)
            | DyadError::EigenNonConvergence { .. }
            | DyadError::Singular { .. }
            | DyadError::Divergence { .. }
            | DyadError::DegenerateEffects(_)
            | DyadError::Estimation(_) => ErrorClass::Estimation,
        }
    }
}
