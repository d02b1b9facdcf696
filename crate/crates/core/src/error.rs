use thiserror::Error;

use crate::grid::SystemState;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("singular matrix at pivot {0}")]
    Singular(usize),

    #[error(
        "remainder-limit estimation failed for f{index}: spread {spread:.3e} exceeds {tol:.3e}"
    )]
    EstimationFailed {
        index: usize,
        spread: f64,
        tol: f64,
        /// (s, R(s)/s^nu) samples of the last decade.
        samples: Vec<(f64, f64)>,
    },

    #[error(
        "iteration did not converge after {iterations} iterations (last residual {residual:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Residual max-norm per iteration.
        trace: Vec<f64>,
        last: Option<Box<SystemState>>,
    },

    #[error("eigen-iteration did not converge after {iterations} iterations")]
    EigenNonConvergence { iterations: usize, last_mu: f64 },

    #[error("step-size control failed at r = {r:.6e}")]
    StepControl { r: f64 },

    #[error("Newton collapsed to the trivial state; {0}")]
    CollapsedToZero(String),

    #[error("continuation failed: {reason}")]
    Continuation {
        reason: String,
        last_lambda: Option<f64>,
    },

    #[error("no subsolution found after {halvings} halvings of epsilon")]
    SubsolutionFailure { halvings: usize },

    #[error("monotone iterates decreased at node {node} (iteration {iteration}, drop {drop:.3e})")]
    MonotonicityViolation {
        iteration: usize,
        node: usize,
        drop: f64,
    },

    #[error("iterate exceeded the supersolution at node {node} (iteration {iteration}, excess {excess:.3e})")]
    SupersolutionViolation {
        iteration: usize,
        node: usize,
        excess: f64,
    },

    #[error("solutions are not distinct: pair_norm gap {gap:.3e}")]
    NotDistinct { gap: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
