use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Input data violates a value-level invariant (non-binary mask, pixel out of range).
    #[error("validation error: {0}")]
    Validation(String),
    /// A configuration value is out of its allowed range.
    #[error("configuration error: {0}")]
    Config(String),
    /// Caller broke an operation precondition (shape mismatch, empty input).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    /// Raised by a training observer (checkpoint writer, audit hook).
    #[error("observer failed: {0}")]
    Observer(String),
}
