//! CSV ingestion and output. An empty cell or the literal `NA` marks a
//! missing entry; `NA` is what gets written back.

use std::fmt::Write as _;
use std::path::Path;

use crate::estimators::DataMatrix;

/// Parsed data together with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub data: DataMatrix,
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_csv(path: &Path) -> Result<Table, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_csv(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse_csv(text: &str) -> Result<Table, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| format!("cannot read header: {e}"))?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.is_empty() || columns.iter().all(String::is_empty) {
        return Err("missing header row".into());
    }
    let p = columns.len();
    let mut values = Vec::new();
    let mut observed = Vec::new();
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(pos) => format!("line {}: {e}", pos.line()),
            None => e.to_string(),
        })?;
        let line = record.position().map_or(n + 2, |pos| pos.line() as usize);
        if record.len() != p {
            return Err(format!("line {line}: expected {p} fields, found {}", record.len()));
        }
        for (col, cell) in record.iter().enumerate() {
            if cell.is_empty() || cell == "NA" {
                values.push(f64::NAN);
                observed.push(false);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                format!("line {line}, column {} ({}): cannot parse {cell:?} as a number", col + 1, columns[col])
            })?;
            if !v.is_finite() {
                return Err(format!("line {line}, column {} ({}): non-finite value {cell:?}", col + 1, columns[col]));
            }
            values.push(v);
            observed.push(true);
        }
        n += 1;
    }
    if n == 0 {
        return Err("no data rows".into());
    }
    let data = DataMatrix::new(n, p, values, observed).map_err(|e| e.to_string())?;
    Ok(Table { columns, data })
}

pub fn write_data(columns: &[String], data: &DataMatrix) -> String {
    let mut out = columns.join(",");
    out.push('\n');
    for i in 0..data.n() {
        let row: Vec<String> = (0..data.p())
            .map(|j| data.get(i, j).map_or_else(|| "NA".to_string(), format_value))
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}
