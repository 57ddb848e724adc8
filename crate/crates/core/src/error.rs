use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("not a Lagrangian frame: {0}")]
    NotLagrangian(String),

    #[error("not a symplectic matrix: {0}")]
    NotSymplectic(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("path has no evaluator; refinement impossible")]
    EvaluatorMissing,

    #[error("refinement exhausted on segment [{t0}, {t1}]: {reason}")]
    RefinementExhausted { t0: f64, t1: f64, reason: String },

    #[error("ambiguous branch matching on segment [{t0}, {t1}]")]
    AmbiguousMatching { t0: f64, t1: f64 },

    #[error("singular right factor at t = {t}")]
    SingularFactor { t: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("ill-conditioned inversion: {0}")]
    IllConditioned(String),

    #[error("rounding residual {residual:.3e} too large in {what}")]
    ResidualTooLarge { what: String, residual: f64 },

    #[error("invalid partition, segment {segment}: {reason}")]
    InvalidPartition { segment: usize, reason: String },

    #[error("partition construction failed: {0}")]
    ConstructionFailed(String),

    #[error("path is not monotone at t = {t} (eigenvalue {eigenvalue:.3e})")]
    NotMonotone { t: f64, eigenvalue: f64 },

    #[error("frame mismatch at t = {t}: Z E differs from Y P by {residual:.3e}")]
    FrameMismatch { t: f64, residual: f64 },

    #[error("no crossing partition found on [{t0}, {t1}]")]
    PartitionNotFound { t0: f64, t1: f64 },

    #[error("integration step failure at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("(l, r) = ({ell}, {r}) outside the admissible rectangle [{l_min}, {l_max}] x [{r_min}, {r_max}]")]
    OutOfRange {
        ell: i64,
        r: i64,
        l_min: i64,
        l_max: i64,
        r_min: i64,
        r_max: i64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
