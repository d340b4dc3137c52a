//! Observation matrices and CSV ingestion.

use std::io::Read;

use nalgebra::DMatrix;

use crate::error::{param, Error, Result};

/// `n x p` matrix of finite observations, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    column_names: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        if values.nrows() < 1 || values.ncols() < 1 {
            return Err(param("data matrix needs at least one row and one column"));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let n = values.nrows();
            return Err(Error::MissingValue { row: idx % n, column: idx / n });
        }
        if let Some(names) = &column_names {
            if names.len() != values.ncols() {
                return Err(param("column name count does not match column count"));
            }
        }
        Ok(Self { values, column_names })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Reads CSV with an optional header row. A header is assumed when any
    /// field of the first record fails to parse as a number. Empty or
    /// non-numeric cells are errors carrying their 0-based data row and
    /// column.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
        let mut names = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if idx == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
                names = Some(rec.iter().map(str::to_string).collect::<Vec<_>>());
                continue;
            }
            let row = rows.len();
            let mut vals = Vec::with_capacity(rec.len());
            for (column, f) in rec.iter().enumerate() {
                match f.parse::<f64>() {
                    Ok(v) if v.is_finite() => vals.push(v),
                    _ => return Err(Error::MissingValue { row, column }),
                }
            }
            if let Some(first) = rows.first() {
                if vals.len() != first.len() {
                    return Err(Error::MissingValue { row, column: vals.len().min(first.len()) });
                }
            }
            rows.push(vals);
        }
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(h) = &names {
            if p != 0 && h.len() != p {
                return Err(param("header width does not match data width"));
            }
        }
        let values = DMatrix::from_fn(n, p, |r, c| rows[r][c]);
        Self::new(values, names)
    }

    pub fn from_csv_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match &self.column_names {
            Some(names) => w.write_record(names)?,
            None => w.write_record((0..self.p()).map(|k| format!("X{k}")))?,
        }
        for r in 0..self.n() {
            w.write_record(self.values.row(r).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
