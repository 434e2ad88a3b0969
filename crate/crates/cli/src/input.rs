use std::path::Path;

use kernex::Sample;
use serde::de::DeserializeOwned;

use crate::error::{CliError, CliResult};

fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// One observation per row, comma-separated reals. Rows are numbered by
/// their line in the file so diagnostics point at the offending line.
pub fn read_sample(path: &Path, has_header: bool) -> CliResult<Sample> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut width = None;
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(CliError::Config(format!(
                    "{}: row {line}: expected {w} columns, found {}",
                    path.display(),
                    record.len()
                )))
            }
            Some(_) => {}
        }
        for field in record.iter() {
            let value: f64 = field.parse().map_err(|_| {
                CliError::Config(format!("{}: row {line}: `{field}` is not a number", path.display()))
            })?;
            if !value.is_finite() {
                return Err(CliError::Config(format!(
                    "{}: row {line}: `{field}` is not finite",
                    path.display()
                )));
            }
            data.push(value);
        }
        n += 1;
    }
    let d = width.ok_or_else(|| CliError::Config(format!("{}: no observations", path.display())))?;
    Ok(Sample::new(data, n, d)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
