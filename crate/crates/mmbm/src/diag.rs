//! Exit codes and JSON diagnostics on stderr.

use std::fmt;
use std::io::Write;

use log::{Level, LevelFilter, Log, Metadata, Record};
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// A failure with a machine-readable code and an exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub exit: i32,
}

impl CliError {
    pub fn input(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into(), exit: EXIT_INPUT }
    }

    pub fn numerical(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into(), exit: EXIT_NUMERICAL }
    }

    pub fn to_json(&self) -> String {
        json!({"level": "error", "code": self.code, "message": self.message}).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<mmbm_core::Error> for CliError {
    fn from(e: mmbm_core::Error) -> Self {
        let exit = if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERICAL };
        Self { code: e.code().into(), message: e.to_string(), exit }
    }
}

/// Splits `"Code: text"` into its code; other messages get `fallback`.
fn split_code<'a>(msg: &'a str, fallback: &'a str) -> (&'a str, &'a str) {
    if let Some((head, rest)) = msg.split_once(": ") {
        let camel = head.chars().next().is_some_and(|c| c.is_ascii_uppercase())
            && head.chars().all(|c| c.is_ascii_alphanumeric());
        if camel {
            return (head, rest);
        }
    }
    (fallback, msg)
}

/// Formats a log record as one JSON line.
pub fn record_json(level: Level, target: &str, msg: &str) -> String {
    let (code, message) = split_code(msg, "Diagnostic");
    json!({
        "level": level.as_str().to_ascii_lowercase(),
        "code": code,
        "target": target,
        "message": message,
    })
    .to_string()
}

struct JsonLogger;

impl Log for JsonLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= log::max_level()
    }

    fn log(&self, record: &Record) {
        if self.enabled(record.metadata()) {
            let line = record_json(record.level(), record.target(), &record.args().to_string());
            let _ = writeln!(std::io::stderr().lock(), "{line}");
        }
    }

    fn flush(&self) {}
}

static LOGGER: JsonLogger = JsonLogger;

/// Routes `log` records to stderr as JSON lines. Safe to call twice.
pub fn init_logging(level: LevelFilter) {
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(level);
    }
}
