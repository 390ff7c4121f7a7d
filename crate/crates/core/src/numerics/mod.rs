//! Special functions, Gamma marginals and adaptive quadrature.
//!
//! Everything here is a pure function of its arguments.

mod gamma;
mod quadrature;
mod special;

pub use gamma::GammaMarginal;
pub use quadrature::{integrate, integrate_with_breakpoints, Integral, QuadratureSpec};
pub use special::{ln_gamma_p, ln_gamma_q, log_gamma, regularized_gamma_p, regularized_gamma_q};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("domain error: {0}")]
    Domain(String),

    /// The subdivision budget ran out before the tolerance was met. The best
    /// available estimate is attached.
    #[error("quadrature did not converge: value {value}, error estimate {abs_error:e} after {intervals} intervals")]
    NotConverged {
        value: f64,
        abs_error: f64,
        intervals: usize,
    },
}

impl NumericError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        NumericError::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, NumericError>;
