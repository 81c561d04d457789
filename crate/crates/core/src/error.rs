use thiserror::Error;

/// Errors surfaced by the pricing library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SabrError {
    /// An input violated a documented bound.
    #[error("{0}")]
    Domain(String),

    #[error("unsupported variable set: {0}")]
    UnsupportedVariableSet(String),

    /// A strike whose symmetry shift would wrap around the periodic V window.
    #[error("strike {strike} out of range: admissible strike ratio K/K0 is within [{min_ratio:.4}, {max_ratio:.4}]")]
    StrikeOutOfRange { strike: f64, min_ratio: f64, max_ratio: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("input error: {0}")]
    Input(String),
}

impl SabrError {
    pub fn domain(msg: impl Into<String>) -> Self {
        SabrError::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        SabrError::Numerical(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            SabrError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, SabrError>;
