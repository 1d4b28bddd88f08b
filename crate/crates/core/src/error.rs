//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The second-order expansion of the field modulus is not trustworthy at
    /// the requested position: (B0 + B'z)^2 must exceed `factor` times
    /// B'^2 rho^2 / 4.
    #[error(
        "field expansion validity violated at z = {z_um:.3} um, rho = {rho_um:.3} um, \
         I = {current:.3} A: (B0 + B'z)^2 = {lhs:.6} G^2 <= {factor} * B'^2 rho^2 / 4 = {rhs:.6} G^2"
    )]
    ValidityViolation {
        z_um: f64,
        rho_um: f64,
        current: f64,
        lhs: f64,
        rhs: f64,
        factor: f64,
    },

    #[error("gradient current is zero; site frequencies are degenerate")]
    ZeroGradient,

    #[error("ODE integration failure: {0}")]
    IntegrationFailure(String),

    #[error("fit failure: {0}")]
    FitFailure(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
