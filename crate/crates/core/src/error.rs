use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid with {points_per_axis}^{dim} points exceeds the point budget of {budget}")]
    GridTooLarge {
        dim: usize,
        points_per_axis: usize,
        budget: usize,
    },

    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// The factorization of `K + noise*I` failed even at the largest jitter.
    #[error("matrix is not positive definite even with jitter {jitter:e}")]
    Conditioning { jitter: f64 },

    #[error("preference model did not converge after {iterations} Newton iterations (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },

    #[error("seed set is empty")]
    EmptySeedSet,

    #[error("safe set is empty")]
    EmptySafeSet,

    #[error("no candidate points for {0}")]
    EmptyCandidates(&'static str),

    #[error("instance generation failed after {0} attempts")]
    GenerationFailed(usize),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
