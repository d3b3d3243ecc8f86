use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{io_err, DataError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    /// Fixed 6 decimals.
    Num(f64),
    /// Shortest text that parses back to the identical value.
    Exact(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.6}"),
            Cell::Exact(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Writes `# key=value` comment lines, a header row, then one line per row.
/// Reals use fixed 6-decimal formatting.
pub fn write_csv(path: &Path, meta: &[(String, String)], columns: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in meta {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(DataError::Invalid(format!("comment entry {k:?} cannot be written on one line")));
        }
        out.push_str(&format!("# {k}={v}\n"));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| DataError::Invalid(e.to_string());
    w.write_record(columns).map_err(csv_err)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(DataError::Invalid(format!("row {i} has {} cells for {} columns", row.len(), columns.len())));
        }
        w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
    }
    out.push_str(std::str::from_utf8(&w.into_inner().map_err(|e| DataError::Invalid(e.to_string()))?).unwrap());
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, out).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub path: PathBuf,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    /// Each row with the 1-based file line it came from.
    pub rows: Vec<(usize, Vec<String>)>,
}

impl CsvTable {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| DataError::Parse {
            path: self.path.clone(),
            line: self.meta.len() + 1,
            message: format!("missing column {name:?}"),
        })
    }

    /// Raw text of `name` in every row.
    pub fn text(&self, name: &str) -> Result<Vec<&str>> {
        let c = self.column(name)?;
        Ok(self.rows.iter().map(|(_, r)| r[c].as_str()).collect())
    }

    /// `name` parsed as reals; empty cells become `None`.
    pub fn numbers(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|(line, r)| {
                let s = r[c].trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse().map(Some).map_err(|_| DataError::Parse {
                    path: self.path.clone(),
                    line: *line,
                    message: format!("column {name:?}: {s:?} is not a number"),
                })
            })
            .collect()
    }

    /// Rows without the comment header, as written.
    pub fn payload(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for (_, r) in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Parses a file written by [`write_csv`]. Errors carry the file line.
pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut meta = Vec::new();
    let mut body_start = 0;
    let mut skipped = 0;
    for line in text.split_inclusive('\n') {
        let Some(rest) = line.strip_prefix('#') else { break };
        let rest = rest.trim_end_matches('\n').trim_start();
        let (k, v) = rest.split_once('=').ok_or_else(|| DataError::Parse {
            path: path.to_path_buf(),
            line: skipped + 1,
            message: "comment is not key=value".into(),
        })?;
        meta.push((k.to_string(), v.to_string()));
        body_start += line.len();
        skipped += 1;
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text[body_start..].as_bytes());
    let parse_err = |e: csv::Error| {
        let line = e.position().map_or(skipped + 1, |p| p.line() as usize + skipped);
        DataError::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        }
    };
    let columns: Vec<String> = rdr.headers().map_err(parse_err)?.iter().map(String::from).collect();
    if columns.is_empty() || columns.iter().all(|c| c.is_empty()) {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line: skipped + 1,
            message: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(parse_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize) + skipped;
        rows.push((line, rec.iter().map(String::from).collect()));
    }
    Ok(CsvTable {
        path: path.to_path_buf(),
        meta,
        columns,
        rows,
    })
}
