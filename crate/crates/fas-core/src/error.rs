//! Error type shared by the numeric engine and the model.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Operand shapes do not line up for the named operation.
    Shape { op: String, detail: String },
    /// A NaN or infinity appeared in the output of the named operation.
    /// Non-finite values are never propagated silently.
    NonFinite { op: String },
    /// Invalid input data (labels out of range, empty sequences, bad dims).
    Input(String),
    /// Invalid configuration value.
    Config(String),
    /// Internal contract violation (e.g. backward from a non-scalar node).
    Contract(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "shape error in {op}: {detail}"),
            Error::NonFinite { op } => write!(f, "non-finite value produced by {op}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
