//! Plain comma-separated files with optional `#` comment lines at the top.
//!
//! Values never contain commas or quotes, so no quoting is performed. Floats
//! are written with Rust's shortest round-trip representation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataio::{LabelVector, Matrix, Partition, ResponseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Formats a float so that parsing it back yields the identical value.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

/// Parsed table: header plus data rows, each tagged with its 1-based line number.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut header: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
            match &header {
                None => header = Some(fields),
                Some(h) => {
                    if fields.len() != h.len() {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line: line_no,
                            column: fields.len().min(h.len()) + 1,
                            message: format!("expected {} fields, found {}", h.len(), fields.len()),
                        });
                    }
                    rows.push((line_no, fields));
                }
            }
        }
        let header = header.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "missing header row".into(),
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    /// Fails unless the header equals `expected` exactly.
    pub fn expect_header(&self, expected: &[&str]) -> Result<()> {
        for (c, want) in expected.iter().enumerate() {
            if self.header.get(c).map(String::as_str) != Some(*want) {
                return Err(self.err_at(1, c, format!("expected header column '{want}'")));
            }
        }
        if self.header.len() != expected.len() {
            return Err(self.err_at(1, expected.len(), "unexpected extra header columns".into()));
        }
        Ok(())
    }

    pub fn err_at(&self, line: usize, col: usize, message: String) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            column: col + 1,
            message,
        }
    }

    /// Parses field `col` of data row `row`.
    pub fn field<T: FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let (line, fields) = &self.rows[row];
        let raw = &fields[col];
        raw.parse::<T>().map_err(|_| {
            self.err_at(
                *line,
                col,
                format!("cannot parse '{raw}' as {}", std::any::type_name::<T>()),
            )
        })
    }

    pub fn finite(&self, row: usize, col: usize) -> Result<f64> {
        let v: f64 = self.field(row, col)?;
        if !v.is_finite() {
            return Err(self.err_at(self.rows[row].0, col, format!("non-finite value {v}")));
        }
        Ok(v)
    }

    pub fn text(&self, row: usize, col: usize) -> &str {
        &self.rows[row].1[col]
    }
}

/// Accumulates CSV text with an optional leading comment.
#[derive(Debug, Default)]
pub struct CsvBuf {
    buf: String,
}

impl CsvBuf {
    pub fn new(comment: Option<&str>, header: &[&str]) -> Self {
        let mut buf = String::new();
        if let Some(c) = comment {
            for l in c.lines() {
                let _ = writeln!(buf, "# {l}");
            }
        }
        buf.push_str(&header.join(","));
        buf.push('\n');
        Self { buf }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            self.buf.push_str(f.as_ref());
        }
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.buf.as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_response_matrix<F: Scalar>(path: &Path, m: &ResponseMatrix<F>, comment: Option<&str>) -> Result<()> {
    let mut header = vec!["stimulus_id"];
    header.extend(m.unit_ids.iter().map(String::as_str));
    let mut out = CsvBuf::new(comment, &header);
    for (i, id) in m.stimulus_ids.iter().enumerate() {
        let mut fields = vec![id.clone()];
        fields.extend(m.values.row(i).iter().map(|v| fmt_float(v.as_f64())));
        out.row(fields);
    }
    out.write(path)
}

/// Reads a response matrix; rows are taken as-is (no re-normalisation).
pub fn read_response_matrix<F: Scalar>(path: &Path) -> Result<ResponseMatrix<F>> {
    let t = Table::read(path)?;
    if t.header.first().map(String::as_str) != Some("stimulus_id") {
        return Err(t.err_at(1, 0, "first header column must be 'stimulus_id'".into()));
    }
    let unit_ids: Vec<String> = t.header[1..].to_vec();
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut data = Vec::with_capacity(t.rows.len() * unit_ids.len());
    for r in 0..t.rows.len() {
        ids.push(t.text(r, 0).to_string());
        for c in 1..t.header.len() {
            data.push(F::of(t.finite(r, c)?));
        }
    }
    ResponseMatrix::new(Matrix::from_vec(ids.len(), unit_ids.len(), data)?, ids, unit_ids)
}

pub fn write_labels(path: &Path, ids: &[String], labels: &LabelVector, comment: Option<&str>) -> Result<()> {
    let mut out = CsvBuf::new(comment, &["stimulus_id", "label"]);
    for (id, l) in ids.iter().zip(&labels.labels) {
        out.row([id.clone(), l.to_string()]);
    }
    out.write(path)
}

/// Returns `(stimulus_ids, labels)`. `n_classes` is `max + 1` unless given.
pub fn read_labels(path: &Path, n_classes: Option<usize>) -> Result<(Vec<String>, LabelVector)> {
    let t = Table::read(path)?;
    t.expect_header(&["stimulus_id", "label"])?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for r in 0..t.rows.len() {
        ids.push(t.text(r, 0).to_string());
        labels.push(t.field::<usize>(r, 1)?);
    }
    let lv = match n_classes {
        Some(k) => LabelVector::new(labels, k)?,
        None => LabelVector::from_labels(labels)?,
    };
    Ok((ids, lv))
}

pub fn write_partition(path: &Path, ids: &[String], p: &Partition, comment: Option<&str>) -> Result<()> {
    let mut out = CsvBuf::new(comment, &["stimulus_id", "cluster"]);
    for (id, c) in ids.iter().zip(p.assignment()) {
        let c = c.map_or("-1".to_string(), |c| c.to_string());
        out.row([id.clone(), c]);
    }
    out.write(path)
}

pub fn read_partition(path: &Path) -> Result<(Vec<String>, Partition)> {
    let t = Table::read(path)?;
    t.expect_header(&["stimulus_id", "cluster"])?;
    let mut ids = Vec::new();
    let mut raw = Vec::new();
    for r in 0..t.rows.len() {
        ids.push(t.text(r, 0).to_string());
        let c: i64 = t.field(r, 1)?;
        raw.push(match c {
            -1 => None,
            c if c >= 0 => Some(c as usize),
            c => return Err(t.err_at(t.rows[r].0, 1, format!("invalid cluster id {c}"))),
        });
    }
    Ok((ids, Partition::from_raw(&raw)))
}
