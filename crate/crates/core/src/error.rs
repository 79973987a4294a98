use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("relay not beneficial: gamma_u ({gamma_u}) <= gamma_2 ({gamma2})")]
    RelayNotBeneficial { gamma2: f64, gamma_u: f64 },

    #[error("power-splitting ratio {rho} outside [0, {rho_max})")]
    RhoOutOfRange { rho: f64, rho_max: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("allocation infeasible: {0}")]
    Infeasible(String),

    #[error("no strictly feasible starting point: {0}")]
    NoInteriorPoint(String),

    #[error("subproblem solver failed: {0}")]
    SubproblemFailed(String),

    #[error("oracle not applicable: {0}")]
    OracleUnsupported(String),

    #[error("grid too large: {points} points exceeds guard {limit}")]
    GridTooLarge { points: f64, limit: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}
