use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: axis {axis} expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("malformed tensor container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        axis: &'static str,
        expected: usize,
        actual: usize,
    ) -> Self {
        Error::Shape {
            context,
            axis,
            expected,
            actual,
        }
    }
}

/// Returns a shape error unless `expected == actual`.
pub(crate) fn ensure_dim(
    context: &'static str,
    axis: &'static str,
    expected: usize,
    actual: usize,
) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::shape(context, axis, expected, actual))
    }
}
