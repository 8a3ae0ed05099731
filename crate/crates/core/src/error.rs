//! Error taxonomy shared by the whole crate.
//!
//! The four variants map one-to-one onto the process exit codes used by the
//! command line front end: configuration and admissibility problems are
//! detected before any time stepping starts, domain errors flag evaluation
//! outside a function's stated domain, and integration failures carry the
//! time that was reached so a caller can report partial progress.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A function was evaluated outside its stated domain (non-positive
    /// volume, exponent out of range, negative density, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A scenario or parameter set is structurally invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// The parameter set violates one of the admissibility hypotheses.
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),

    /// Time stepping could not reach the requested final time.
    #[error("integration failure at t = {t_reached}: {reason}")]
    Integration { reason: String, t_reached: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the command line layer maps this error to.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Domain(_) | Error::Config(_) | Error::Inadmissible(_) => 2,
            Error::Integration { .. } => 3,
        }
    }
}
