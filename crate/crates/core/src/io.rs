//! Strict CSV ingestion.
//!
//! Dialect: UTF-8, comma separated, `.` as decimal mark, mandatory header.
//! One column is the response, an optional column carries row identifiers,
//! and every other column is a predictor. An intercept column of ones is
//! prepended unless disabled.

use crate::linalg::{Dataset, LinalgError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

pub const INTERCEPT_LABEL: &str = "intercept";

#[derive(Debug, Error)]
pub enum IoError {
    /// `line` is the 1-based line in the file (the header is line 1);
    /// `column` is the header name of the offending field.
    #[error("line {line}, column `{column}`: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },
    #[error("malformed csv: {0}")]
    Malformed(String),
    #[error("response column `{0}` not found in header")]
    MissingResponse(String),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("duplicate column name `{0}` in header")]
    DuplicateColumn(String),
    #[error("duplicate row id `{0}`")]
    DuplicateRowId(String),
    #[error("no data rows")]
    Empty,
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("assembled design: {0}")]
    Design(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub response: String,
    #[serde(default = "default_true")]
    pub intercept: bool,
    #[serde(default)]
    pub id_column: Option<String>,
}

fn default_true() -> bool {
    true
}

impl CsvOptions {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            response: response.into(),
            intercept: true,
            id_column: None,
        }
    }

    pub fn with_id_column(mut self, id: impl Into<String>) -> Self {
        self.id_column = Some(id.into());
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(file, opts)
}

fn parse_number(field: &str, line: u64, column: &str) -> Result<f64, IoError> {
    let err = |message: String| IoError::Parse {
        line,
        column: column.to_string(),
        message,
    };
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Err(err("empty field".into()));
    }
    // only plain decimal notation: digits, sign, '.', exponent
    if !trimmed
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E'))
    {
        return Err(err(format!("`{trimmed}` is not a number")));
    }
    let v: f64 = trimmed
        .parse()
        .map_err(|_| err(format!("`{trimmed}` is not a number")))?;
    if !v.is_finite() {
        return Err(err(format!("`{trimmed}` is not finite")));
    }
    Ok(v)
}

/// Parses CSV text into a dataset.
pub fn parse_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<Dataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(b',')
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| IoError::Malformed(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(IoError::DuplicateColumn(h.clone()));
        }
    }
    let response_idx = headers
        .iter()
        .position(|h| *h == opts.response)
        .ok_or_else(|| IoError::MissingResponse(opts.response.clone()))?;
    let id_idx = match &opts.id_column {
        Some(id) => Some(
            headers
                .iter()
                .position(|h| h == id)
                .ok_or_else(|| IoError::MissingColumn(id.clone()))?,
        ),
        None => None,
    };
    if id_idx == Some(response_idx) {
        return Err(IoError::Malformed(
            "response and id column must differ".into(),
        ));
    }
    let predictor_idx: Vec<usize> = (0..headers.len())
        .filter(|&j| j != response_idx && Some(j) != id_idx)
        .collect();

    let mut ys = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); predictor_idx.len()];
    let mut row_ids = Vec::new();
    let mut ids_seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| match e.position() {
            Some(pos) => IoError::Parse {
                line: pos.line(),
                column: String::new(),
                message: e.to_string(),
            },
            None => IoError::Malformed(e.to_string()),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        ys.push(parse_number(&record[response_idx], line, &headers[response_idx])?);
        for (col, &j) in cols.iter_mut().zip(&predictor_idx) {
            col.push(parse_number(&record[j], line, &headers[j])?);
        }
        let id = match id_idx {
            Some(j) => record[j].trim().to_string(),
            None => (ys.len()).to_string(),
        };
        if !ids_seen.insert(id.clone()) {
            return Err(IoError::DuplicateRowId(id));
        }
        row_ids.push(id);
    }
    let n = ys.len();
    if n == 0 {
        return Err(IoError::Empty);
    }
    let offset = usize::from(opts.intercept);
    let p = predictor_idx.len() + offset;
    let x = DMatrix::from_fn(n, p, |i, j| {
        if j < offset {
            1.0
        } else {
            cols[j - offset][i]
        }
    });
    let mut labels = Vec::with_capacity(p);
    if opts.intercept {
        labels.push(INTERCEPT_LABEL.to_string());
    }
    labels.extend(predictor_idx.iter().map(|&j| headers[j].clone()));
    Ok(Dataset::new(x, DVector::from_vec(ys), labels, row_ids)?)
}

/// Writes a dataset back out as CSV (`id`, predictors, response) with
/// round-trip float formatting. Columns labelled `intercept` that hold only
/// ones are omitted, so the result re-reads with the intercept switched on.
pub fn dataset_to_csv(data: &Dataset, response: &str) -> String {
    let keep: Vec<usize> = (0..data.p())
        .filter(|&j| {
            !(data.labels()[j] == INTERCEPT_LABEL && data.x().column(j).iter().all(|&v| v == 1.0))
        })
        .collect();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("id")
        .chain(keep.iter().map(|&j| data.labels()[j].as_str()))
        .chain(std::iter::once(response));
    wtr.write_record(header).expect("in-memory write");
    for i in 0..data.n() {
        let mut row = vec![data.row_ids()[i].clone()];
        row.extend(keep.iter().map(|&j| crate::export::fmt_f64(data.x()[(i, j)])));
        row.push(crate::export::fmt_f64(data.y()[i]));
        wtr.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 input")
}
