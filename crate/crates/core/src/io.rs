//! Column-oriented CSV helpers shared by the exporters.
//!
//! Floats are written with 17 significant digits so that every value
//! survives a write/read cycle bit-exactly.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV cell: an exact float, an integer index, or blank.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Index(usize),
    Real(f64),
    Empty,
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::Index(i) => i.to_string(),
            Cell::Real(x) => format_f64(x),
            Cell::Empty => String::new(),
        }
    }
}

pub fn write_rows<W, I, R>(writer: W, header: &[&str], rows: I) -> csv::Result<()>
where
    W: Write,
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = Cell>,
{
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row.into_iter().map(Cell::render))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rows_to_path<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = Cell>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(io::BufWriter::new(file), header, rows).map_err(|e| Error::csv(path, e))
}

/// Parsed CSV with named float columns; blank cells read as NaN.
#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::csv(path, e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            for (col, field) in columns.iter_mut().zip(record.iter()) {
                let field = field.trim();
                if field.is_empty() {
                    col.push(f64::NAN);
                    continue;
                }
                let value = field.parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!(
                        "{}: row {}: `{}` is not a number",
                        path.display(),
                        line + 2,
                        field
                    ))
                })?;
                col.push(value);
            }
        }
        Ok(Table { headers, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn require(&self, path: &Path, name: &str) -> Result<&[f64]> {
        self.column(name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    }
}
