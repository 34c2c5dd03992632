//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown catalog entry: {0}")]
    Catalog(String),

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        /// Accepted states up to the failure, each row `[t, y...]`.
        partial: Vec<Vec<f64>>,
    },

    #[error("no shooting root converged: {0}")]
    NotFound(String),

    #[error("chart error: {0}")]
    Chart(String),

    #[error("inconsistent data: {0}")]
    Inconsistency(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quadrature did not converge (achieved relative error {achieved:e})")]
    Quadrature { achieved: f64 },

    #[error("poor exponent fit: r2 = {r2}, slope = {slope}")]
    FitQuality { r2: f64, slope: f64 },

    #[error("outside the domain: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("minimizers form a continuous family ({0} roots found)")]
    Continuum(usize),

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
