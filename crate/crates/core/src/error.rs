use std::io;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes disagree.
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was invoked outside its contract.
    #[error("usage error: {0}")]
    Usage(String),
    /// Input data failed a consistency check.
    #[error("validation error: {0}")]
    Validation(String),
    /// The noise schedule cannot be inverted at the requested time.
    #[error("singular schedule at t = {t}: alpha_bar = {alpha_bar}")]
    SingularSchedule { t: usize, alpha_bar: f64 },
    /// A gradient contained NaN or infinity.
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    /// Training produced a non-finite loss.
    #[error("non-finite loss at step {step}: denoise = {denoise}, spectral = {spectral}, total = {total}")]
    Diverged {
        step: usize,
        denoise: f64,
        spectral: f64,
        total: f64,
    },
    #[error(transparent)]
    Checkpoint(#[from] crate::experiments::checkpoint::CheckpointError),
    #[error("malformed image {path}: {reason}")]
    Image { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(context: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            context,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
