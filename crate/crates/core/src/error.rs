use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate element {0}: zero length or area")]
    DegenerateElement(usize),

    #[error("matrix not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("linear solve residual {0:e} above tolerance after refinement")]
    ResidualTooLarge(f64),

    #[error("eigen-solver did not converge")]
    EigenNoConvergence,

    #[error("covariance kernel not positive semidefinite on this mesh (eigenvalue {0:e})")]
    NegativeEigenvalue(f64),

    #[error("unknown marginal `{0}`")]
    UnknownMarginal(String),

    #[error("modulus field mean is not positive at element {0}")]
    NonPositiveMean(usize),

    #[error("sample screening rejected {rejected} draws for {samples} samples")]
    TooManyRedraws { rejected: usize, samples: usize },

    #[error("basis exhausted: new direction is linearly dependent on prior couples")]
    BasisExhausted,

    #[error("degenerate prior couple {0}: kappa below 1e-300")]
    DegenerateCouple(usize),

    #[error("{flagged} of {total} samples hit a near-zero denominator in the lambda update")]
    TooManyFlaggedSamples { flagged: usize, total: usize },

    #[error("Galerkin operator for couple {couple} not positive definite (c_ikk = {coefficients:?})")]
    GalerkinNotSpd {
        couple: usize,
        coefficients: Vec<f64>,
    },

    #[error("{rejected} of {total} Monte Carlo samples rejected (non-SPD)")]
    TooManyRejected { rejected: usize, total: usize },

    #[error("degenerate sample: zero spread")]
    DegenerateSample,
}
