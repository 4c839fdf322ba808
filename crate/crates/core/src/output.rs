//! CSV and JSON writers for run artifacts.
//!
//! Floats are printed as `{:.16e}` (17 significant digits), which
//! round-trips every finite `f64` exactly.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

/// Column-oriented CSV with a header row and LF line endings.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> io::Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    if header.len() != columns.len() || columns.iter().any(|c| c.len() != rows) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "header and columns disagree in shape",
        ));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for r in 0..rows {
        w.write_record(columns.iter().map(|c| format!("{:.16e}", c[r])))?;
    }
    w.flush()
}

/// Reads a file written by [`write_columns`] back into its header and
/// columns.
pub fn read_columns(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for record in r.records() {
        let record = record?;
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let v = field.trim().parse::<f64>().map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("`{field}`: {e}"))
            })?;
            col.push(v);
        }
    }
    Ok((header, columns))
}

/// Pretty JSON with a trailing newline. Key order follows field order.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}
