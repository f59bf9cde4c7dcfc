use serde::Serialize;
use serde_json::{json, Value};

/// Error reported on stderr as one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn missing(what: &str) -> Self {
        Self::new("missing_input", format!("{what} is required"))
    }

    /// Process exit code: 2 for usage and configuration problems, 1 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self.kind.as_str() {
            "config" | "usage" | "missing_input" => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<emgspeech::Error> for CliError {
    fn from(e: emgspeech::Error) -> Self {
        let details = match &e {
            emgspeech::Error::LengthMismatch { what, left, right } => {
                json!({ "what": what, "left": left, "right": right })
            }
            emgspeech::Error::Diverged { epoch, loss } => json!({ "epoch": epoch, "loss": loss }),
            _ => Value::Null,
        };
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
            details,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        emgspeech::Error::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        emgspeech::Error::from(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;
