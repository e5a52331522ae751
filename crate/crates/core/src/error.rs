//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state must have at least one mode")]
    ZeroModes,
    #[error("mode index {mode} out of range for {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("beamsplitter modes ({0}, {1}) must be distinct")]
    DegenerateModePair(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("squeezing parameter r = {0} must be non-negative; set the axis via phi")]
    NegativeSqueezing(f64),
    #[error("matrix is not symmetric (defect {defect:.3e})")]
    NotSymmetric { defect: f64 },
    #[error("matrix is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("matrix is not an embedded mode rotation (block defect {defect:.3e})")]
    NotModeRotation { defect: f64 },
    #[error("covariance is not a valid quantum state (min symplectic eigenvalue {nu_min})")]
    UncertaintyViolation { nu_min: f64 },
    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,
    #[error("state is not pure: det(2σ) = {det}")]
    NotPure { det: f64 },
    #[error("Fock truncation tail {tail:.3e} exceeds tolerance {tol:.3e} at cutoff {cutoff}")]
    TruncationTail { tail: f64, tol: f64, cutoff: usize },
    #[error("Fock envelope exceeded: {0}")]
    FockEnvelope(String),
    #[error(
        "cascade stage {stage}: target |α| = {required:.6} exceeds remaining pump amplitude {available:.6}"
    )]
    CascadeInfeasible {
        stage: usize,
        required: f64,
        available: f64,
    },
    #[error("loss compensation infeasible at stage {stage}: required η = {eta:.6e} > 1")]
    CompensationInfeasible { stage: usize, eta: f64 },
    #[error("loss compensation did not converge (mean residual {residual:.3e})")]
    CompensationDiverged { residual: f64 },
    #[error("no fitted η budget for fidelity level {0}; available levels are 0.95 and 0.98")]
    UnsupportedFidelityLevel(f64),
    #[error("bisection failed: {0}")]
    BisectionFailed(String),
    #[error("program has no displacement cascade")]
    NoCascadeStage,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
