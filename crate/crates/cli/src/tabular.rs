//! Numeric CSV tables with a leading id column, shared by the tabular stages.

use std::fmt::Write as _;

use ratekit::error::{Error, Result};
use ratekit::serial::{fmt_f64, parse_f64};
use ratekit::Tensor;

/// `id` column plus named numeric columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(ids: Vec<String>, columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::argument(format!("{} ids for {} rows", ids.len(), rows.len())));
        }
        if rows.iter().any(|r| r.len() != columns.len()) {
            return Err(Error::shape("ragged table rows"));
        }
        Ok(Table { ids, columns, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[index]).collect()
    }

    /// All columns except `drop` as an `n x p` tensor.
    pub fn features(&self, drop: &[usize]) -> Result<Tensor> {
        let keep: Vec<usize> =
            (0..self.columns.len()).filter(|i| !drop.contains(i)).collect();
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| keep.iter().map(|&i| r[i]).collect())
            .collect();
        Tensor::from_rows(&rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for c in &self.columns {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.rows) {
            out.push_str(id);
            for v in row {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (hln, header) = lines.next().ok_or_else(|| Error::parse(1, "empty table"))?;
        let mut cols = header.trim().split(',');
        if cols.next() != Some("id") {
            return Err(Error::parse(hln, "first column must be \"id\""));
        }
        let columns: Vec<String> = cols.map(str::to_owned).collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.trim().split(',');
            let id = fields.next().unwrap_or_default();
            if id.is_empty() {
                return Err(Error::parse(ln, "missing id"));
            }
            let row: Vec<f64> = fields.map(|f| parse_f64(f, ln)).collect::<Result<_>>()?;
            if row.len() != columns.len() {
                return Err(Error::parse(
                    ln,
                    format!("expected {} values, got {}", columns.len(), row.len()),
                ));
            }
            ids.push(id.to_owned());
            rows.push(row);
        }
        Table::new(ids, columns, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let t = Table::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![vec![1.0, 2.0], vec![3.5, -0.25]],
        )
        .unwrap();
        let text = t.to_csv();
        assert_eq!(Table::from_csv(&text).unwrap(), t);
    }

    #[test]
    fn width_mismatch_reports_line() {
        let err = Table::from_csv("id,x,y\nr1,1.0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
