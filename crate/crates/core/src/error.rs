use thiserror::Error;

use crate::balance::BalanceReport;
use crate::model::Population;
use crate::particle::ObservableSeries;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("projection matrix is degenerate (normalised det = {det:.3e}, need > 1/2); n too small for this basis")]
    SingularProjection { det: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("variance must be positive (got {0:e})")]
    NonPositiveVariance(f64),

    #[error("variance must be non-negative (got {0:e})")]
    NegativeVariance(f64),

    #[error("eigenvalue iteration did not converge")]
    EigenFailure,

    #[error("balance solver did not converge after {iterations} iterations ({reason}); |G|_inf = {residual:.3e}")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        reason: &'static str,
    },

    #[error("no stable balanced root: root found with stability margin {:.3e} >= 0", .report.stability_margin)]
    UnstableRoot { report: Box<BalanceReport> },

    #[error("balance Jacobian is singular (|det J| = {det:.3e})")]
    SingularJacobian { det: f64 },

    #[error("limit dynamics unsupported: {0}")]
    UnsupportedLimit(String),

    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),

    #[error("blow-up at t = {t}: |z| of {population:?} neuron {index} exceeded 1e6 (unbalanced regime?)")]
    BlowUp {
        t: f64,
        index: usize,
        population: Population,
        partial: Box<ObservableSeries>,
    },

    #[error("sample set is empty")]
    EmptySample,

    #[error("limit law is not Gaussian")]
    NonGaussianLimit,

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
