//! Rectangular feature matrix keyed by cell id and canonical feature name.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Row-major matrix with a cell id per row and a canonical feature name
/// per column. Column order is the enumeration order of the space that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    cell_ids: Vec<String>,
    names: Vec<String>,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>) -> Self {
        FeatureMatrix {
            cell_ids: Vec::new(),
            names,
            data: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cell_id: impl Into<String>, row: Vec<f64>) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(Error::invalid(format!(
                "row has {} values, matrix has {} columns",
                row.len(),
                self.names.len()
            )));
        }
        self.cell_ids.push(cell_id.into());
        self.data.extend(row);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols()..(r + 1) * self.n_cols()]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols() + c]
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// New matrix containing the given rows, in the given order.
    pub fn subset_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(self.names.clone());
        for &r in rows {
            out.cell_ids.push(self.cell_ids[r].clone());
            out.data.extend_from_slice(self.row(r));
        }
        out
    }

    /// New matrix keeping only the given columns, in the given order.
    pub fn subset_cols(&self, cols: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(cols.iter().map(|&c| self.names[c].clone()).collect());
        out.cell_ids = self.cell_ids.clone();
        for r in 0..self.n_rows() {
            let row = self.row(r);
            out.data.extend(cols.iter().map(|&c| row[c]));
        }
        out
    }

    /// CSV: header `cell_id,<name>,...`; NaN spelled `NaN`; floats printed
    /// in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut header = String::from("cell_id");
        for name in &self.names {
            header.push(',');
            header.push_str(name);
        }
        header.push('\n');
        out.write_all(header.as_bytes())?;
        for r in 0..self.n_rows() {
            let mut line = self.cell_ids[r].clone();
            for &v in self.row(r) {
                line.push(',');
                if v.is_nan() {
                    line.push_str("NaN");
                } else {
                    line.push_str(&format!("{}", v));
                }
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<FeatureMatrix> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty feature CSV"))??;
        let mut cols = header.split(',');
        if cols.next() != Some("cell_id") {
            return Err(Error::invalid("feature CSV must start with a cell_id column"));
        }
        let names: Vec<String> = cols.map(str::to_string).collect();
        let mut matrix = FeatureMatrix::new(names);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let cell_id = parts
                .next()
                .ok_or_else(|| Error::invalid(format!("bad CSV line {}", lineno + 2)))?
                .to_string();
            let mut row = Vec::with_capacity(matrix.n_cols());
            for part in parts {
                let v = if part == "NaN" {
                    f64::NAN
                } else {
                    part.parse::<f64>().map_err(|_| {
                        Error::invalid(format!(
                            "bad numeric value `{}` on CSV line {}",
                            part,
                            lineno + 2
                        ))
                    })?
                };
                row.push(v);
            }
            matrix.push_row(cell_id, row)?;
        }
        Ok(matrix)
    }
}
