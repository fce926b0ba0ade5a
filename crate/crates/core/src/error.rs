use thiserror::Error;

/// Every failure the library can report.
///
/// Variants split into two families: validation errors (bad input, violated
/// preconditions) and numerical errors (a computation that could not be carried
/// out to the requested accuracy). [`Error::is_numerical`] tells them apart; the
/// command line tool maps them to distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("containment violated: {0}")]
    Containment(String),
    #[error("rank deficiency: {0}")]
    Rank(String),
    #[error("integer overflow in exact arithmetic: {0}")]
    Overflow(String),
    #[error("invalid basis: {0}")]
    Basis(String),
    #[error("insufficient regularity: {0}")]
    Regularity(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("ill-conditioned matrix: {0}")]
    Conditioning(String),
    #[error("chart error: {0}")]
    Chart(String),
    #[error("integration blow-up: {0}")]
    BlowUp(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("prerequisite not met: {0}")]
    Prerequisite(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of a numerical procedure rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow(_)
                | Error::Conditioning(_)
                | Error::BlowUp(_)
                | Error::Convergence(_)
                | Error::Calibration(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
