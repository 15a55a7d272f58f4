//! CLI error taxonomy; each class owns a distinct process exit code.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or unrecognized input format (exit 2).
    Config(String),
    /// Missing or malformed data files (exit 3).
    Data(String),
    /// Non-finite values during computation (exit 4).
    Numeric(String),
    /// Checkpoint/manifest/config incompatibility (exit 5).
    Incompatible(String),
    /// Gradient check exceeded tolerance (exit 6).
    GradCheck(String),
    /// Every sweep cell failed (exit 7).
    SweepAllFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Incompatible(_) => 5,
            CliError::GradCheck(_) => 6,
            CliError::SweepAllFailed(_) => 7,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::Incompatible(m) => write!(f, "incompatibility: {m}"),
            CliError::GradCheck(m) => write!(f, "gradient check failed: {m}"),
            CliError::SweepAllFailed(m) => write!(f, "sweep failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fas_core::Error> for CliError {
    fn from(e: fas_core::Error) -> Self {
        match e {
            fas_core::Error::Config(m) => CliError::Config(m.to_string()),
            fas_core::Error::Input(m) => CliError::Data(m.to_string()),
            fas_core::Error::NonFinite { op } => CliError::Numeric(format!("non-finite in {op}")),
            fas_core::Error::Shape { op, detail } => {
                CliError::Incompatible(format!("shape mismatch in {op}: {detail}"))
            }
            fas_core::Error::Contract(m) => CliError::Incompatible(m.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
