use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("fields belong to different meshes ({left} vs {right})")]
    MeshMismatch { left: u64, right: u64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid configuration: {}", .problems.join("; "))]
    InvalidConfig { problems: Vec<String> },

    #[error("conjugate gradient did not converge in {iters} iterations (relative residual {residual:e})")]
    NotConverged { iters: usize, residual: f64 },

    #[error("conjugate gradient breakdown after {iters} iterations: {reason}")]
    Breakdown { iters: usize, reason: String },

    #[error("step {step}, picard iteration {picard}: {source}")]
    Step {
        step: usize,
        picard: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
