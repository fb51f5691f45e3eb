//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad value in a scenario, calibration, or mission config.
    #[error("config error: {0}")]
    Config(String),

    /// Bad argument passed to an operation (negative mass, zero dt, ...).
    #[error("argument error: {0}")]
    Argument(String),

    /// Wet-chemistry step rejected its inputs.
    #[error("assay error: {0}")]
    Assay(String),

    /// Telemetry event could not be encoded (non-finite number in payload).
    #[error("encode error: {0}")]
    Encode(String),

    /// Telemetry line could not be parsed.
    #[error("parse error{}: {message}", fmt_line(.line))]
    Parse { line: Option<usize>, message: String },

    /// Telemetry stream violates ordering or cross-check rules.
    #[error("stream integrity error: {0}")]
    Integrity(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_line(line: &Option<usize>) -> String {
    match line {
        Some(n) => format!(" at line {n}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_error_mentions_line_number() {
        let err = Error::Parse {
            line: Some(7),
            message: "truncated object".into(),
        };
        let text = err.to_string();
        assert!(text.contains("line 7"), "got: {text}");
    }

    #[test]
    fn parse_error_without_line_still_displays() {
        let err = Error::Parse {
            line: None,
            message: "empty line".into(),
        };
        assert_eq!(err.to_string(), "parse error: empty line");
    }
}
