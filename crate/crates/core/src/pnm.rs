//! Plain-text portable graymap/pixmap reader and writer.
//!
//! Supports the ASCII variants: `P2` (one channel) and `P3` (three channels).
//! Loading normalizes intensities to [0, 1]; writing quantizes against the
//! given max value. Keeps the crate free of image codec dependencies.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::serial::parse_usize;
use crate::tensor::Tensor;

/// Parses a plain PNM (`P2` graymap or `P3` pixmap) into an `H x W x C`
/// tensor with values in [0, 1]. `#` comments are honored.
pub fn parse_pnm(text: &str) -> Result<Tensor> {
    let mut tokens = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        for tok in body.split_whitespace() {
            tokens.push((ln + 1, tok));
        }
    }
    let mut it = tokens.into_iter();
    let (ln, magic) = it.next().ok_or_else(|| Error::parse(1, "empty image file"))?;
    let channels = match magic {
        "P2" => 1,
        "P3" => 3,
        other => return Err(Error::parse(ln, format!("unsupported magic {other:?}, want P2 or P3"))),
    };
    let mut take = |what: &str| {
        it.next()
            .ok_or_else(|| Error::parse(0, format!("unexpected end of image file, wanted {what}")))
    };
    let (ln, w_tok) = take("width")?;
    let width = parse_usize(w_tok, ln)?;
    let (ln, h_tok) = take("height")?;
    let height = parse_usize(h_tok, ln)?;
    let (ln, max_tok) = take("max value")?;
    let max_value = parse_usize(max_tok, ln)?;
    if width == 0 || height == 0 || max_value == 0 {
        return Err(Error::parse(ln, "width, height and max value must be positive"));
    }
    let mut data = Vec::with_capacity(height * width * channels);
    for _ in 0..height * width * channels {
        let (ln, tok) = take("raster value")?;
        let v = parse_usize(tok, ln)?;
        if v > max_value {
            return Err(Error::parse(ln, format!("raster value {v} exceeds max {max_value}")));
        }
        data.push(v as f64 / max_value as f64);
    }
    if let Some((ln, extra)) = it.next() {
        return Err(Error::parse(ln, format!("trailing raster content {extra:?}")));
    }
    Tensor::new(vec![height, width, channels], data)
}

/// Writes an `H x W x C` tensor (C = 1 or 3, values clamped to [0, 1]) as a
/// plain PNM with the given max value.
pub fn write_pnm(image: &Tensor, max_value: usize) -> Result<String> {
    if image.rank() != 3 {
        return Err(Error::shape(format!("image must be rank-3, got {:?}", image.shape())));
    }
    let [h, w, c] = [image.shape()[0], image.shape()[1], image.shape()[2]];
    let magic = match c {
        1 => "P2",
        3 => "P3",
        other => return Err(Error::shape(format!("PNM supports 1 or 3 channels, got {other}"))),
    };
    if max_value == 0 {
        return Err(Error::argument("max value must be positive"));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{magic}");
    let _ = writeln!(out, "{w} {h}");
    let _ = writeln!(out, "{max_value}");
    for i in 0..h {
        let mut row = Vec::with_capacity(w * c);
        for j in 0..w {
            for k in 0..c {
                let v = image.at3(i, j, k).clamp(0.0, 1.0);
                row.push(((v * max_value as f64).round() as usize).to_string());
            }
        }
        let _ = writeln!(out, "{}", row.join(" "));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_graymap() {
        let img = parse_pnm("P2\n# tiny\n2 2\n255\n0 255\n128 64\n").unwrap();
        assert_eq!(img.shape(), &[2, 2, 1]);
        assert_eq!(img.at3(0, 1, 0), 1.0);
        assert!((img.at3(1, 0, 0) - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn quantized_roundtrip_preserves_levels() {
        let img = parse_pnm("P2\n3 1\n255\n10 200 255\n").unwrap();
        let text = write_pnm(&img, 255).unwrap();
        let back = parse_pnm(&text).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn truncated_raster_is_an_error() {
        assert!(parse_pnm("P2\n2 2\n255\n1 2 3\n").is_err());
    }

    #[test]
    fn bad_magic_is_an_error() {
        assert!(parse_pnm("P5\n1 1\n255\n0\n").is_err());
    }
}
