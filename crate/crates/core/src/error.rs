use std::path::PathBuf;

use thiserror::Error;

/// One recorded Newton step: the iterate and the secular value there.
pub type TracePoint = (f64, f64);

#[derive(Debug, Error)]
pub enum TrsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ill-defined compact representation (condition estimate {condition:.3e})")]
    IllDefinedCompact { condition: f64 },

    #[error("Psi is rank deficient (R[{index},{index}] = {value:.3e})")]
    RankDeficient { index: usize, value: f64 },

    #[error("invalid compact factors: {0}")]
    InvalidFactors(String),

    #[error("symmetric eigensolver failed to converge on a {0}x{0} matrix")]
    EigenFailure(usize),

    #[error("derivative undefined at pole sigma = {sigma}")]
    DerivativeAtPole { sigma: f64 },

    #[error("secular function has no terms")]
    EmptySecular,

    #[error("Newton iteration did not converge in {max_iter} iterations")]
    NewtonMaxIter { max_iter: usize, trace: Vec<TracePoint> },

    #[error("monotonicity violated: sigma decreased from {from} to {to}")]
    MonotonicityViolated { from: f64, to: f64, trace: Vec<TracePoint> },

    #[error("SMW breakdown: small system singular at tau = {tau}")]
    SmwBreakdown { tau: f64 },

    #[error("no canonical vector has a nonzero projection onto the complement of P_par")]
    NoLeftmostEigenvector,

    #[error("hard-case orthogonality violated: |p_hat^T u_min| = {dot:.3e}, bound {bound:.3e}")]
    HardCaseOrthogonality { dot: f64, bound: f64 },

    #[error("solver inconsistency: {0}")]
    Inconsistent(String),

    #[error("dense oracle limited to n <= {ceiling}, got n = {n}")]
    OracleTooLarge { n: usize, ceiling: usize },

    #[error("bracket expansion failed after {0} doublings")]
    BracketFailure(usize),

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, TrsError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(TrsError::DimensionMismatch { expected, found })
    }
}
