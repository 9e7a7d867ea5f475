//! Machine-readable error records, one JSON object per line on stderr.

use std::path::Path;
use std::process::ExitCode;

use serde_json::{json, Value};

use reach_sos::certify::CertifyError;
use reach_sos::io::{OutputError, ProblemError};
use reach_sos::relax::RelaxError;

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub details: Vec<Value>,
}

impl CliError {
    fn new(kind: &'static str, message: String) -> Self {
        CliError {
            kind,
            message,
            details: Vec::new(),
        }
    }

    pub fn usage(message: String) -> Self {
        Self::new("usage", message)
    }

    pub fn mismatch(message: String) -> Self {
        Self::new("mismatch", message)
    }

    pub fn solve(message: String) -> Self {
        Self::new("solve", message)
    }

    pub fn internal(message: String) -> Self {
        Self::new("internal", message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        if self.kind == "usage" {
            2
        } else {
            1
        }
    }

    pub fn record(&self) -> Value {
        let mut v = json!({ "error": self.kind, "message": self.message });
        if !self.details.is_empty() {
            v["details"] = Value::Array(self.details.clone());
        }
        v
    }

    pub fn emit(&self) {
        eprintln!("{}", self.record());
    }

    pub fn report(&self) -> ExitCode {
        self.emit();
        ExitCode::from(self.exit_code())
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        let kind = match e {
            ProblemError::Io { .. } => "io",
            ProblemError::Syntax(_) => "syntax",
            ProblemError::Schema(_) => "schema",
        };
        CliError {
            kind,
            details: e
                .issues()
                .iter()
                .map(|i| json!({ "field": i.field, "message": i.message }))
                .collect(),
            message: e.to_string(),
        }
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        let kind = match e {
            OutputError::Io { .. } => "io",
            OutputError::Format(_) => "format",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<RelaxError> for CliError {
    fn from(e: RelaxError) -> Self {
        Self::solve(e.to_string())
    }
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::Relax(e) => e.into(),
            e => Self::new("certify", e.to_string()),
        }
    }
}
