//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction, validation, integration and analysis.
#[derive(Debug, Error)]
pub enum Error {
    /// A derivative evaluation returned NaN or infinity.
    #[error("non-finite derivative at t = {t} in state component `{name}`")]
    NonFiniteDerivative { t: f64, name: String },

    /// The per-component magnitude guard tripped during integration. Usually
    /// a sign of a destabilizing gain choice or an unbounded master system.
    #[error("state magnitude guard tripped at t = {t}: |{name}| = {value:.3e} exceeds guard {guard:.3e}")]
    BlowUp {
        t: f64,
        name: String,
        value: f64,
        guard: f64,
    },

    /// A matrix that must be Hurwitz has an eigenvalue on or right of the
    /// imaginary axis.
    #[error("matrix is not Hurwitz: eigenvalue {re:.6}{im:+.6}i has nonnegative real part")]
    NotHurwitz { re: f64, im: f64 },

    /// A transfer function that must be minimum phase has a zero on or right
    /// of the imaginary axis.
    #[error("transfer function is not minimum phase: zero at {re:.6}{im:+.6}i")]
    NotMinimumPhase { re: f64, im: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("missing channel `{0}`")]
    MissingChannel(String),

    #[error("time series parse error at line {line}: {msg}")]
    SeriesParse { line: usize, msg: String },

    #[error("Lyapunov solve failed: {0}")]
    Lyapunov(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
