//! Result envelope and exit codes.

use schmidt_lab_core::Error;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    VerdictNegative,
    Inconclusive,
    Error,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::VerdictNegative => "verdict-negative",
            Status::Inconclusive => "inconclusive",
            Status::Error => "error",
        }
    }
}

/// Why a command produced no payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Input,
    Numerical,
}

#[derive(Debug, Clone)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Input, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Numerical, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::Dimension(_) | Error::Argument(_) => FailureKind::Input,
            Error::Numerical(_) | Error::Structure(_) | Error::Protocol(_) => FailureKind::Numerical,
        };
        Self { kind, message: e.to_string() }
    }
}

/// What a command prints: JSON on stdout, `summary` on stderr.
#[derive(Debug, Clone)]
pub struct CommandResult {
    pub status: Status,
    pub payload: Option<Value>,
    pub diagnostics: Vec<String>,
    pub summary: String,
    failure: Option<FailureKind>,
}

impl CommandResult {
    pub fn new(status: Status, payload: Value, summary: impl Into<String>) -> Self {
        Self { status, payload: Some(payload), diagnostics: Vec::new(), summary: summary.into(), failure: None }
    }

    pub fn failed(f: Failure) -> Self {
        Self {
            status: Status::Error,
            payload: None,
            summary: f.message.clone(),
            diagnostics: vec![f.message],
            failure: Some(f.kind),
        }
    }

    pub fn with_diagnostics(mut self, diagnostics: Vec<String>) -> Self {
        self.diagnostics.extend(diagnostics);
        self
    }

    pub fn to_json(&self) -> Value {
        json!({
            "status": self.status.name(),
            "payload": self.payload.clone().unwrap_or(Value::Null),
            "diagnostics": self.diagnostics,
        })
    }

    pub fn exit_code(&self) -> u8 {
        match (self.status, self.failure) {
            (Status::Ok, _) => 0,
            (Status::VerdictNegative, _) => 1,
            (Status::Error, Some(FailureKind::Numerical)) => 3,
            (Status::Error, _) => 2,
            (Status::Inconclusive, _) => 4,
        }
    }
}
