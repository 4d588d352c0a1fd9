use thiserror::Error;

use crate::solver::IterationLog;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("radius {r} outside the domain [0, {r0}]")]
    Domain { r: f64, r0: f64 },

    #[error("non-finite density integrand at r = {r} (a = {a}, b = {b}, c = {c})")]
    Evaluation { r: f64, a: f64, b: f64, c: f64 },

    #[error("fixed-point iteration stopped after {} sweeps (last delta {:.3e})", .log.iterations(), .log.last_delta())]
    IterationLimit { log: Box<IterationLog> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("characteristic integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the user input rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Precondition(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
