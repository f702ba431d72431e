use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported reward dimension {0}; at most 4 components are handled")]
    UnsupportedDimension(usize),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("series diverges: {0}")]
    Divergent(String),

    /// A root bracket that the model invariants guarantee could not be
    /// formed. Indicates an inconsistent model rather than a user error.
    #[error("internal consistency: {0}")]
    Bracket(String),

    #[error("no convergence after {iterations} iterations in {context} (last iterate {last:?})")]
    NonConvergence {
        context: &'static str,
        iterations: usize,
        last: Vec<f64>,
    },

    #[error("first-moment series diverges at k = {0:?}")]
    MomentDivergence(Vec<f64>),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("no admissible path: Z^c_{0} vanishes")]
    NoPath(usize),

    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::Bracket(_) | Error::MomentDivergence(_)
        )
    }
}
