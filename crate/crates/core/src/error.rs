use thiserror::Error;

/// Errors surfaced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Syntax error in a layout file, with the 1-based line number.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Semantic problem in input data (bad entity, violated invariant).
    #[error("{0}")]
    Invalid(String),

    /// Iterative solver ran out of iterations.
    #[error("solver did not converge: relative residual {residual:.3e} after {iters} iterations")]
    NoConverge { residual: f64, iters: usize },

    /// Tensor shape disagreement.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at optimizer step {step}")]
    NanLoss { step: usize },

    /// Malformed checkpoint or dataset file.
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
