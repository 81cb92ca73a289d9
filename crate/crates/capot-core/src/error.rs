use alloc::string::String;
use core::fmt;

/// Error type shared by all core modules.
///
/// Variants carry enough context to be rendered as a single line; the CLI
/// maps them onto process exit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    /// Input data violates a precondition (empty text, dangling id, ...).
    InvalidInput(String),
    /// A resource file failed to parse or misses a required entry.
    Resource(String),
    /// Shapes or dimensions disagree (embedding dim, bucket count, ...).
    ShapeMismatch(String),
    /// An update was attempted on frozen encoder parameters.
    Frozen(String),
    /// A serialized artifact is malformed (bad magic, truncation, version).
    Format(String),
    /// The external rewrite backend failed or returned unusable output.
    Rewrite(String),
    /// A numeric precondition failed (non-finite score, empty norm, ...).
    Numeric(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidInput(m) => write!(f, "invalid input: {m}"),
            CoreError::Resource(m) => write!(f, "resource: {m}"),
            CoreError::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
            CoreError::Frozen(m) => write!(f, "frozen parameters: {m}"),
            CoreError::Format(m) => write!(f, "format: {m}"),
            CoreError::Rewrite(m) => write!(f, "rewrite backend: {m}"),
            CoreError::Numeric(m) => write!(f, "numeric: {m}"),
        }
    }
}

impl core::error::Error for CoreError {}
