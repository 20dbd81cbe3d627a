//! Command-line front end: reads a JSON run configuration (or flags), runs
//! one pipeline of the `ioncav` toolkit and serialises the result as CSV or
//! JSON. Every file it writes parses back with the readers in [`output`].

pub mod config;
pub mod output;
pub mod run;
pub mod units;

use std::fmt;

use ioncav::CavityError;
use serde::{Deserialize, Serialize};

pub use config::{Format, Mode, OutputSpec, RunConfig};
pub use run::{run, Rendered};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    Infeasible,
    Numerical,
    Io,
}

/// Error reported on stderr as a single JSON record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliError {
    pub kind: ErrorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Io,
            field: None,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Io => 1,
            ErrorKind::Validation => 2,
            ErrorKind::Infeasible => 3,
            ErrorKind::Numerical => 4,
        }
    }

    /// One-line JSON record, `{"error": {...}, "exit_code": n}`.
    pub fn record(&self) -> String {
        serde_json::json!({ "error": self, "exit_code": self.exit_code() }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{field}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CavityError> for CliError {
    fn from(e: CavityError) -> Self {
        let message = e.to_string();
        let (kind, field) = match &e {
            CavityError::InvalidParameter { name, .. } => (ErrorKind::Validation, Some(name.to_string())),
            CavityError::UnknownQuantity(_) => (ErrorKind::Validation, Some("quantity".to_string())),
            e if e.is_infeasible() => (ErrorKind::Infeasible, None),
            e if e.is_numerical() => (ErrorKind::Numerical, None),
            _ => (ErrorKind::Validation, None),
        };
        Self { kind, field, message }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let cases = [
            (CavityError::InvalidParameter { name: "radius", reason: "x".into() }, 2),
            (CavityError::UnknownQuantity("q".into()), 2),
            (CavityError::UnstableGeometry("x".into()), 3),
            (CavityError::NoFeasibleDesign { starts: 4 }, 3),
            (CavityError::StepSizeUnderflow { time: 1.0 }, 4),
            (CavityError::QuadratureNotConverged { change: 1e-3 }, 4),
        ];
        for (e, code) in cases {
            assert_eq!(CliError::from(e.clone()).exit_code(), code, "{e}");
        }
        let named = CliError::from(CavityError::InvalidParameter { name: "radius", reason: "x".into() });
        assert_eq!(named.field.as_deref(), Some("radius"));
    }

    #[test]
    fn error_record_is_json() {
        let e = CliError::validation("length", "bad");
        let v: serde_json::Value = serde_json::from_str(&e.record()).unwrap();
        assert_eq!(v["exit_code"], 2);
        assert_eq!(v["error"]["kind"], "validation");
        assert_eq!(v["error"]["field"], "length");
    }
}
