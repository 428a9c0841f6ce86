use thiserror::Error;

/// Every failure the library can report.
///
/// Validation problems (bad input) and numerical problems (an algorithm that
/// could not certify its answer) are kept apart so callers can map them to
/// different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("coupling is not summable: {0}")]
    NonSummable(String),

    #[error("interaction is not reflection positive: {0}")]
    NotReflectionPositive(String),

    #[error("infrared integral diverges: {0}")]
    Divergent(String),

    #[error("quadrature failed to reach tolerance: {0}")]
    QuadratureFailure(String),

    #[error("real-space tail too heavy for requested tolerance: {0}")]
    TailTooHeavy(String),

    #[error("magnetization outside the convex hull of the spin space: {0}")]
    Infeasible(String),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("inner (q-1)-state problem is not in its ordered phase: {0}")]
    InnerNotOrdered(String),

    #[error("field outside the transition-line range: {0}")]
    OutOfRange(String),

    #[error("branches coincide: {0}")]
    DegenerateBranches(String),

    #[error("branch disappeared during continuation: {0}")]
    BranchLost(String),

    #[error("no sign change in bracket: {0}")]
    NoCrossing(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("chain not equilibrated: {0}")]
    NotEquilibrated(String),

    #[error("invalid input: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a numerical routine.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ParameterOutOfRange(_)
                | Error::NonSummable(_)
                | Error::NotReflectionPositive(_)
                | Error::Divergent(_)
                | Error::Infeasible(_)
                | Error::InnerNotOrdered(_)
                | Error::OutOfRange(_)
                | Error::DimensionMismatch(_)
                | Error::Usage(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(std::io::Error::other(e))
    }
}
