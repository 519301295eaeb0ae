use core::fmt;

/// Failure modes of the numerical pipeline.
///
/// The per-segment variants (`SingularMatrix`, `TooFewCandidates`,
/// `NonFinite`) are containment points: the pipeline downgrades the affected
/// segment to `Unassigned` instead of aborting the frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Input cloud has no points.
    EmptyCloud,
    /// A parameter violated its domain (message names the parameter).
    Domain(&'static str),
    /// Cholesky factorization failed even at the top of the jitter ladder.
    SingularMatrix,
    /// Segment has too few ground candidates for the requested operation.
    TooFewCandidates { got: usize, need: usize },
    /// Objective or gradient evaluated to NaN/Inf.
    NonFinite,
    /// Optimizer start point has a non-finite objective.
    NonFiniteStart,
    /// Synthetic terrain specification is inconsistent (message names the field).
    InvalidSpec(&'static str),
    /// Paired inputs have different lengths.
    LengthMismatch { left: usize, right: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyCloud => write!(f, "point cloud is empty"),
            Error::Domain(what) => write!(f, "parameter out of domain: {what}"),
            Error::SingularMatrix => {
                write!(f, "covariance matrix not positive definite after max jitter")
            }
            Error::TooFewCandidates { got, need } => {
                write!(f, "segment has {got} ground candidates, need at least {need}")
            }
            Error::NonFinite => write!(f, "objective evaluated to a non-finite value"),
            Error::NonFiniteStart => write!(f, "objective non-finite at the start point"),
            Error::InvalidSpec(what) => write!(f, "invalid terrain spec: {what}"),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
