use thiserror::Error;

/// Errors produced by the dense kernels, sparse operators and solver drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular matrix: pivot {pivot:.3e} below tolerance at elimination step {step}")]
    SingularMatrix { step: usize, pivot: f64 },

    #[error("matrix is not upper Hessenberg (below-subdiagonal mass {0:.3e})")]
    NotHessenberg(f64),

    #[error("eigenvalue iteration failed to converge within {0} QR sweeps")]
    NoConvergence(usize),

    #[error("matrix 1-norm {0:.3e} exceeds the exponential overflow guard")]
    Overflow(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("I + gamma*H is numerically singular (gamma = {0:.3e})")]
    SingularShift(f64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported matrix market header: {0}")]
    UnsupportedField(String),

    #[error("shifted solve failed: {0}")]
    SolveFailure(String),

    #[error("restart basis is rank deficient at column {0}")]
    RankDeficient(usize),

    #[error("projected matrix is numerically singular")]
    SingularProjected,

    #[error("residual re-expansion mismatch: error {0:.3e}")]
    BasisMismatch(f64),

    #[error("stiff integrator step size underflow at tau = {0:.3e}")]
    StiffFailure(f64),

    #[error("series start failed for phi order {0}")]
    SingularStart(usize),

    #[error("sector assumption violated: eps + Re(mu_{idx}) = {value:.3e} <= 0")]
    AssumptionViolated { idx: usize, value: f64 },

    #[error("integral bound precondition k + k1 + 2*ell >= 4 violated")]
    DivergentIntegral,

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
