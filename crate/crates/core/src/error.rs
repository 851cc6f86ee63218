//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid weight {weight} for edge ({src}, {dst}): {msg}")]
    InvalidWeight {
        src: String,
        dst: String,
        weight: f64,
        msg: String,
    },

    #[error("conflicting duplicate edge ({src}, {dst}): {first} vs {second}")]
    ConflictingEdge {
        src: String,
        dst: String,
        first: f64,
        second: f64,
    },

    #[error("matrix is not symmetric (max asymmetry {max_dev:.3e})")]
    NotSymmetric { max_dev: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver failed to converge")]
    EigenNonConvergence,

    #[error("negative retained eigenvalues under policy `error`: {values:?}")]
    NegativeEigenvalues { values: Vec<f64> },

    #[error("only {available} positive eigenvalues available, {requested} requested")]
    InsufficientPositiveEigenvalues { available: usize, requested: usize },

    #[error("block moment matrix is not PSD at moment order {k} (min eigenvalue {min_eig:.3e})")]
    BlockMatrixNotPsd { k: usize, min_eig: f64 },

    #[error("second-moment matrix Delta is singular at moment order {k}")]
    SingularDelta { k: usize },

    #[error("moment overflow at order {k}: {msg}")]
    MomentOverflow { k: usize, msg: String },

    #[error(
        "Vandermonde system too ill-conditioned (cond {cond:.3e} > {limit:.3e}); \
         use the Chebyshev variant"
    )]
    IllConditioned { cond: f64, limit: f64 },

    #[error("nonnegative least-squares infeasible: residual {residual:.3e} above {tol:.3e}")]
    InfeasibleNnls { residual: f64, tol: f64 },

    #[error("moment sequence fails the Hankel admissibility check (min eigenvalue {min_eig:.3e})")]
    InadmissibleMoments { min_eig: f64 },

    #[error("integrand overflow (exponent {exponent:.3e} > 700); rescale the support")]
    IntegrandOverflow { exponent: f64 },

    #[error(
        "auto-truncated support [{a}, {b}] leaves tail mass {tail:.3e}; supply a wider support"
    )]
    TruncationTail { a: f64, b: f64, tail: f64 },

    #[error("optimizer hit the iteration cap ({iters} iterations, gradient norm {grad_norm:.3e})")]
    IterationCap { iters: usize, grad_norm: f64 },

    #[error("non-finite objective at iterate {iter}")]
    NonFiniteObjective { iter: usize },

    #[error("replicate pipeline failed at stage `{stage}` for pair ({i}, {j}): {source}")]
    ReplicateStage {
        stage: &'static str,
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}
