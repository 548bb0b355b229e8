//! Emission of JSON documents and CSV tables.
//!
//! CSV tables have a header row, RFC-4180 quoting, `.` as the decimal
//! separator and reals in scientific notation with 17 significant digits, so
//! every value parses back to the same `f64`.

use serde::Serialize;

use crate::error::CliError;

/// What a command prints, and the exit status it asks for.
#[derive(Debug)]
pub struct Report {
    pub body: String,
    pub status: i32,
}

impl Report {
    pub fn json<T: Serialize>(value: &T, status: i32) -> Result<Self, CliError> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        Ok(Self { body, status })
    }
}

/// A real with 17 significant digits; empty when absent.
pub fn real(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.16e}"),
        Some(x) => x.to_string(),
        None => String::new(),
    }
}

pub fn csv_table(header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Failure(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Failure(format!("csv: {e}")))
}
