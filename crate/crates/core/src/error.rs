use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |M_ij - conj(M_ji)| = {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("trace is {trace}, expected 1")]
    TraceNotOne { trace: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("eigensolver failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("POVM element {index} is not positive semidefinite: min eigenvalue {min_eigenvalue:e}")]
    ElementNotPsd { index: usize, min_eigenvalue: f64 },

    #[error("POVM elements do not sum to identity: max deviation {deviation:e}")]
    CompletenessViolated { deviation: f64 },

    #[error("a POVM needs at least 2 nonzero elements, found {count}")]
    TooFewElements { count: usize },

    #[error("could not reach an informationally complete set of bases in dimension {dim} after {attempts} attempts")]
    CompletenessUnreachable { dim: usize, attempts: usize },

    #[error("support violation at outcome {index}: reference probability {p:e} is below the floor")]
    SupportViolation { index: usize, p: f64 },

    #[error("outcome {outcome} of group {group} has hypothesis probability {p:e}, too small for a chi-squared test")]
    ZeroProbabilityOutcome { group: usize, outcome: usize, p: f64 },

    #[error("sigma is rank deficient (min eigenvalue {min_eigenvalue:e}) and regularization is disabled")]
    SingularSigma { min_eigenvalue: f64 },

    #[error("count mismatch in group {group}: {detail}")]
    CountMismatch { group: usize, detail: String },

    #[error("invalid measurement design: {0}")]
    InvalidDesign(String),

    #[error("outside the domain: {0}")]
    DomainEdge(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("random POVM construction produced a singular total after {attempts} attempts")]
    SingularTotal { attempts: usize },

    #[error("malformed input: {0}")]
    Format(String),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceFailure(_)
                | Error::CompletenessUnreachable { .. }
                | Error::SingularTotal { .. }
        )
    }
}
