//! Problem files, certificates, reports, grids and bundled fixtures.

mod certificate;
mod expr;
pub mod fixtures;
mod grid;
mod problem;

use std::path::Path;

use thiserror::Error;

use crate::certify::CertReport;
use crate::scalar::Real;
use crate::sdp::ConicProgram;

pub use certificate::{
    CertificateFile, Domain, SolverSummary, Term, CERTIFICATE_FORMAT, CERTIFICATE_VERSION,
};
pub use expr::{is_identifier, parse_polynomial, ParseError, ParseErrorKind, MAX_EXPONENT};
pub use grid::{grid, inside_flag, GridAxis, GridFile, GridRow};
pub use problem::{
    load_problem, parse_problem, problem_hash, LoadedProblem, ProblemError, ProblemOptions,
    SchemaIssue, DEFAULT_HORIZON,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OutputError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed file: {0}")]
    Format(String),
}

pub(crate) fn write_text(path: impl AsRef<Path>, text: &str) -> Result<(), OutputError> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| OutputError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub(crate) fn read_text(path: impl AsRef<Path>) -> Result<String, OutputError> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| OutputError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn report_to_json(report: &CertReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

pub fn reports_to_json(reports: &[CertReport]) -> String {
    serde_json::to_string_pretty(reports).expect("report serializes") + "\n"
}

pub fn report_from_json(text: &str) -> Result<CertReport, OutputError> {
    serde_json::from_str(text).map_err(|e| OutputError::Format(e.to_string()))
}

pub fn save_report(path: impl AsRef<Path>, report: &CertReport) -> Result<(), OutputError> {
    write_text(path, &report_to_json(report))
}

/// Writes a program in the sparse triplet text format of
/// [`ConicProgram::write_dump`].
pub fn save_program<T: Real>(
    path: impl AsRef<Path>,
    program: &ConicProgram<T>,
) -> Result<(), OutputError> {
    let mut buf = Vec::new();
    program.write_dump(&mut buf).expect("writing to memory");
    write_text(path, &String::from_utf8(buf).expect("dump is ASCII"))
}
