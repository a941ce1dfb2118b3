//! CSV ingestion of observation matrices.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Layout of an observation file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// `None` detects a header from non-numeric cells in the first record.
    pub has_header: Option<bool>,
    /// First column holds time labels rather than observations.
    pub time_column: bool,
}

/// Observations plus the annotations found in the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub observations: Matrix,
    /// One label per row when the file has a time column.
    pub time_labels: Option<Vec<String>>,
    /// Names of the observation columns when the file has a header.
    pub column_names: Option<Vec<String>>,
}

impl Dataset {
    /// Label of the 1-based observation index, or the index itself.
    pub fn label(&self, index: usize) -> String {
        match &self.time_labels {
            Some(l) if index >= 1 && index <= l.len() => l[index - 1].clone(),
            _ => index.to_string(),
        }
    }
}

/// Reads a CSV file of observations, one row per time step.
pub fn load_csv(path: impl AsRef<Path>, schema: CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, schema).map_err(|e| match e {
        Error::Csv(inner) => Error::Data(format!("{}: {inner}", path.display())),
        other => other,
    })
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        row,
        col,
        msg: format!("'{}' is not a number", cell.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            col,
            msg: format!("'{}' is not finite", cell.trim()),
        });
    }
    Ok(v)
}

/// As [`load_csv`] from any reader. Rows and columns in diagnostics are
/// 1-based positions in the file.
pub fn parse_csv(reader: impl Read, schema: CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Data("file contains no records".into()));
    }
    let skip = usize::from(schema.time_column);
    let header = match schema.has_header {
        Some(h) => h,
        None => records[0].iter().skip(skip).any(|c| c.parse::<f64>().is_err()),
    };
    let column_names = header.then(|| records[0].iter().skip(skip).map(str::to_owned).collect());
    let body = &records[usize::from(header)..];
    if body.is_empty() {
        return Err(Error::Data("file contains a header but no observations".into()));
    }
    let width = body[0].len();
    if width <= skip {
        return Err(Error::Data("no numeric columns besides the time column".into()));
    }
    let first_line = 1 + usize::from(header);
    let mut data = Vec::with_capacity(body.len() * (width - skip));
    let mut labels = schema.time_column.then(Vec::new);
    for (r, rec) in body.iter().enumerate() {
        if let Some(l) = labels.as_mut() {
            l.push(rec[0].to_owned());
        }
        for (c, cell) in rec.iter().enumerate().skip(skip) {
            data.push(parse_cell(cell, first_line + r, c + 1)?);
        }
    }
    Ok(Dataset {
        observations: Matrix::from_vec(body.len(), width - skip, data)?,
        time_labels: labels,
        column_names,
    })
}

/// Writes a matrix as headerless CSV.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, super::tables::matrix_csv(m)?).map_err(|e| Error::io(path, e))
}
