use thiserror::Error;

/// Failure categories shared by every module.
///
/// The CLI maps each variant to its own exit code, so new failure modes
/// should reuse one of these rather than adding ad-hoc variants.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A measurement design or record set cannot determine the requested unknowns.
    #[error("design error: {0}")]
    Design(String),

    /// A numerical routine did not reach its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Laser/cavity settings violate the adiabatic or linear-response regime.
    #[error("regime violation: {}", .0.join("; "))]
    Regime(Vec<String>),

    /// Malformed input file or configuration.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn design<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Design(msg.into()))
}
