//! Minimal numeric CSV tables: a fixed header row, LF line endings, and
//! floats printed in their shortest round-trip form.

use crate::error::{invalid, Result};

/// Renders equally long columns under `header`.
pub fn write_table(header: &[&str], columns: &[&[f64]]) -> String {
    assert_eq!(header.len(), columns.len(), "one header per column");
    let rows = columns.first().map_or(0, |c| c.len());
    assert!(columns.iter().all(|c| c.len() == rows), "ragged columns");

    let mut out = header.join(",");
    out.push('\n');
    for row in 0..rows {
        for (j, column) in columns.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_number(column[row]));
        }
        out.push('\n');
    }
    out
}

/// Parses a table written by [`write_table`], checking the header exactly.
/// Returns the columns.
pub fn read_table(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or_else(|| invalid("empty CSV"))?;
    let found: Vec<&str> = first.split(',').map(str::trim).collect();
    if found != header {
        return Err(invalid(format!(
            "unexpected CSV header `{}`, expected `{}`",
            first.trim(),
            header.join(",")
        )));
    }
    let mut columns = vec![Vec::new(); header.len()];
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(invalid(format!(
                "CSV row {} has {} fields, expected {}",
                lineno + 2,
                fields.len(),
                header.len()
            )));
        }
        for (column, field) in columns.iter_mut().zip(fields) {
            let value = field
                .trim()
                .parse::<f64>()
                .map_err(|e| invalid(format!("CSV row {}: `{}`: {e}", lineno + 2, field.trim())))?;
            column.push(value);
        }
    }
    Ok(columns)
}

/// Shortest representation that parses back to the same bits.
pub fn format_number(value: f64) -> String {
    format!("{value}")
}
