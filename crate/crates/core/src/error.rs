use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Channel parameters violate `0 < sigma1_sq < sigma2_sq`, `n >= 1`.
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),

    /// Adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error(
        "quadrature did not converge on [{lower}, {upper}]: estimate {estimate:e}, \
         error {error:e} after {subdivisions} subdivisions"
    )]
    NonConvergence {
        lower: f64,
        upper: f64,
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    /// A root bracket could not be established.
    #[error("bracket expansion failed after {doublings} doublings (last upper bound {upper})")]
    Bracket { doublings: usize, upper: f64 },

    /// The closed-form capacity was requested outside the small-amplitude regime.
    #[error(
        "radius {radius} lies outside the small-amplitude regime (f(R) = {f_value:e} > 0); \
         use the shell optimizer"
    )]
    Regime { radius: f64, f_value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
