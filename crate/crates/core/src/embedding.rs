//! The shared embedding table: an ordered map from ids to fixed-length
//! vectors, plus its text file format.
//!
//! File layout: a `<count> <dimension>` header line, then one `<id> <v1> ...
//! <vl>` line per entry with 17-significant-digit floats, so write/read and
//! read/write are exact round-trips.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::serial::{fmt_f64, parse_usize, split_f64};

/// Ordered `(id -> vector)` map with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    rows: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::argument("embedding dimension must be positive"));
        }
        Ok(EmbeddingTable { dimension, ids: Vec::new(), index: HashMap::new(), rows: Vec::new() })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Appends an entry. Ids must be unique, whitespace-free and match the
    /// table dimension.
    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::argument(format!("embedding id {id:?} must be non-empty and whitespace-free")));
        }
        if vector.len() != self.dimension {
            return Err(Error::shape(format!(
                "embedding for {id:?} has length {}, table dimension is {}",
                vector.len(),
                self.dimension
            )));
        }
        if self.index.contains_key(&id) {
            return Err(Error::argument(format!("duplicate embedding id {id:?}")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.rows.push(vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.rows[i].as_slice())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Ids in insertion order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// `(id, vector)` pairs in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids.iter().map(String::as_str).zip(self.rows.iter().map(Vec::as_slice))
    }

    /// Serializes to the shared embedding file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.len(), self.dimension);
        for (id, row) in self.iter() {
            out.push_str(id);
            for v in row {
                out.push(' ');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the shared embedding file format, reporting the offending line
    /// on malformed headers or rows.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (hln, header) = lines.next().ok_or_else(|| Error::parse(1, "empty embedding file"))?;
        let mut parts = header.split_whitespace();
        let (count, dimension) = match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(d), None) => (parse_usize(c, hln)?, parse_usize(d, hln)?),
            _ => return Err(Error::parse(hln, "header must be \"<count> <dimension>\"")),
        };
        let mut table = EmbeddingTable::new(dimension)?;
        for _ in 0..count {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::parse(count + 1, format!("expected {count} rows")))?;
            let mut split = line.splitn(2, char::is_whitespace);
            let id = split
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::parse(ln, "missing id"))?;
            let rest = split.next().unwrap_or("");
            let row = split_f64(rest, dimension, ln)?;
            table.insert(id, row)?;
        }
        if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::parse(ln, format!("unexpected trailing content {extra:?}")));
        }
        Ok(table)
    }
}
