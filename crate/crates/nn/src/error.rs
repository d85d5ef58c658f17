use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite gradient; update rejected")]
    NonFiniteGradient,
    #[error("gradients do not match the parameter layout")]
    LayoutMismatch,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(context: &str, expected: &[usize], got: &[usize]) -> NnError {
    NnError::ShapeMismatch {
        context: context.to_string(),
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}
