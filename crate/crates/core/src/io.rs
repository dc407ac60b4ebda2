//! CSV ingestion and output.
//!
//! Matrices are stored variables-by-samples. A header row is recognised when
//! any of its cells is non-numeric, and a leading column of names when any
//! data row starts with a non-numeric cell. Numbers are written with 17
//! significant digits so files round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::ViewMatrix;

/// A numeric matrix with whatever labels the file carried.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub values: DMatrix<f64>,
    pub row_names: Option<Vec<String>>,
    pub col_names: Option<Vec<String>>,
}

/// A loaded view and its variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedView {
    pub view: ViewMatrix,
    pub variable_names: Option<Vec<String>>,
    pub sample_names: Option<Vec<String>>,
}

impl LoadedView {
    /// Variable names from the file, or `v1`, `v2`, ... when absent.
    pub fn names(&self) -> Vec<String> {
        self.variable_names
            .clone()
            .unwrap_or_else(|| default_names("v", self.view.p()))
    }
}

pub fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

/// Text form used for every number written by this crate.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

fn csv_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

/// Reads any rectangular numeric CSV with optional header and name column.
pub fn read_csv_matrix(path: &Path) -> Result<LabeledMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut records: Vec<(u64, Vec<String>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        records.push((line, rec.iter().map(str::to_string).collect()));
    }
    let Some((first_line, first)) = records.first() else {
        return Err(Error::Input {
            path: path.to_path_buf(),
            message: "empty file".into(),
        });
    };
    let width = first.len();
    if let Some((line, rec)) = records.iter().find(|(_, r)| r.len() != width) {
        return Err(csv_error(
            path,
            *line,
            format!("expected {width} fields (as on line {first_line}), found {}", rec.len()),
        ));
    }

    let has_header = first.iter().any(|c| parse_number(c).is_none());
    let data = &records[usize::from(has_header)..];
    let has_names = if data.is_empty() {
        has_header && width > 0
    } else {
        data.iter().any(|(_, r)| parse_number(&r[0]).is_none())
    };
    let skip = usize::from(has_names);
    let ncols = width - skip.min(width);

    let mut values = DMatrix::zeros(data.len(), ncols);
    let mut row_names = Vec::with_capacity(data.len());
    for (i, (line, rec)) in data.iter().enumerate() {
        if has_names {
            row_names.push(rec[0].clone());
        }
        for (j, cell) in rec[skip..].iter().enumerate() {
            values[(i, j)] = parse_number(cell).ok_or_else(|| {
                csv_error(path, *line, format!("field {} is not numeric: '{cell}'", j + skip + 1))
            })?;
        }
    }
    Ok(LabeledMatrix {
        values,
        row_names: has_names.then_some(row_names),
        col_names: has_header.then(|| first[skip..].to_vec()),
    })
}

/// Loads a data view: rows are variables, columns samples.
pub fn load_matrix_csv(path: &Path) -> Result<LoadedView> {
    let m = read_csv_matrix(path)?;
    let view = ViewMatrix::new(m.values).map_err(|e| match e {
        Error::NonFinite { row, col } => Error::Input {
            path: path.to_path_buf(),
            message: format!("non-finite value at variable {}, sample {}", row + 1, col + 1),
        },
        Error::NoVariables | Error::TooFewSamples(_) => Error::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
        other => other,
    })?;
    Ok(LoadedView {
        view,
        variable_names: m.row_names,
        sample_names: m.col_names,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes a labelled matrix: a header row `corner, col_names...` followed by
/// one row per matrix row led by its name.
pub fn write_matrix_csv(
    path: &Path,
    m: &DMatrix<f64>,
    corner: &str,
    row_names: &[String],
    col_names: &[String],
) -> Result<()> {
    if row_names.len() != m.nrows() || col_names.len() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} x {} matrix with {} row and {} column names",
            m.nrows(),
            m.ncols(),
            row_names.len(),
            col_names.len()
        )));
    }
    let mut w = create(path)?;
    let mut out = String::new();
    out.push_str(corner);
    for c in col_names {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, name) in row_names.iter().enumerate() {
        out.push_str(name);
        for j in 0..m.ncols() {
            out.push(',');
            out.push_str(&format_number(m[(i, j)]));
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a table whose cells are already formatted.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = create(path)?;
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
