use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Unknown identifier or inconsistent combination of settings.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input violates an operation precondition (shape, range, tangency).
    #[error("validation error: {0}")]
    Validation(String),
    /// A point that should lie on the target manifold does not.
    #[error("state error: {0}")]
    State(String),
    /// Evaluation outside the domain of a potential.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported target: {0}")]
    UnsupportedTarget(String),
    /// The input is not critical enough for the requested analysis.
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("numerical blowup at step {step}: {detail}")]
    NumericalBlowup { step: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
