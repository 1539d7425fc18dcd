//! Text serialization helpers shared by every file format in the crate.
//!
//! Floats are written with 17 significant digits, which round-trips any
//! finite f64 exactly.

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits (scientific notation).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses a float, reporting the 1-based source line on failure.
pub fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("expected a number, got {token:?}")))
}

/// Parses an unsigned integer, reporting the 1-based source line on failure.
pub fn parse_usize(token: &str, line: usize) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| Error::parse(line, format!("expected a non-negative integer, got {token:?}")))
}

/// Joins a slice of floats into one whitespace-separated line.
pub fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
}

/// Splits a whitespace-separated line into exactly `expected` floats.
pub fn split_f64(text: &str, expected: usize, line: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| parse_f64(t, line))
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::parse(
            line,
            format!("expected {expected} values, got {}", values.len()),
        ));
    }
    Ok(values)
}
