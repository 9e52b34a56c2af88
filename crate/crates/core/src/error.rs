use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid parameters or mismatched inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A point lies outside the sample space a kernel is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested computation is impossible at this sample size.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// The model density is zero (or not finite) at an observation.
    #[error("score underflow at observation {index}")]
    ScoreUnderflow { index: usize },

    #[error("EM fit failed: {0}")]
    FitFailure(FitDiagnostics),

    /// A factorization that cannot fail for valid inputs did.
    #[error("internal numerical error: {0}")]
    Numerical(String),
}

/// Why every EM restart was discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub k: usize,
    pub restarts: usize,
    pub reasons: Vec<String>,
}

impl fmt::Display for FitDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "all {} restarts degenerate for k={}",
            self.restarts, self.k
        )?;
        if let Some(first) = self.reasons.first() {
            write!(f, " (first: {first})")?;
        }
        Ok(())
    }
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
