//! Shared numeric text encoding for manifests and checkpoints.
//!
//! Values are written with Rust's shortest round-trip `f64` formatting, so
//! `parse(format(x)) == x` bit for bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn format_values(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_f64(*v));
    }
    out
}

pub fn parse_values(text: &str) -> std::result::Result<Vec<f64>, String> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| {
            let v: f64 = t.trim().parse().map_err(|_| format!("bad number `{t}`"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite number `{t}`"))
            }
        })
        .collect()
}

/// `key=value` pairs from a header such as `#lora v1 layers=2 rank=4`.
pub(crate) fn header_fields<'a>(
    line: &'a str,
    magic: &str,
) -> std::result::Result<Vec<(&'a str, &'a str)>, String> {
    let rest = line
        .strip_prefix(magic)
        .ok_or_else(|| format!("expected header starting with `{magic}`"))?;
    rest.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| format!("bad header field `{kv}`"))
        })
        .collect()
}

pub(crate) fn field<T: std::str::FromStr>(
    fields: &[(&str, &str)],
    key: &str,
) -> std::result::Result<T, String> {
    let raw = fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| format!("missing header field `{key}`"))?;
    raw.parse()
        .map_err(|_| format!("bad value `{raw}` for `{key}`"))
}

/// `<rows>x<cols>\t<values>`.
pub(crate) fn format_matrix(m: &Matrix) -> String {
    format!("{}x{}\t{}", m.rows(), m.cols(), format_values(m.as_slice()))
}

pub(crate) fn parse_matrix(shape: &str, values: &str) -> std::result::Result<Matrix, String> {
    let (r, c) = shape
        .split_once('x')
        .ok_or_else(|| format!("bad shape `{shape}`"))?;
    let rows: usize = r.parse().map_err(|_| format!("bad shape `{shape}`"))?;
    let cols: usize = c.parse().map_err(|_| format!("bad shape `{shape}`"))?;
    let data = parse_values(values)?;
    Matrix::new(rows, cols, data).map_err(|e| e.to_string())
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `text`, creating missing parent directories.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn values_round_trip_bitwise(values in proptest::collection::vec(
            proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 0..40)) {
            let back = parse_values(&format_values(&values)).unwrap();
            prop_assert_eq!(back.len(), values.len());
            for (a, b) in back.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(parse_values("1.0,NaN").is_err());
        assert!(parse_values("inf").is_err());
        assert!(parse_values("1.0,,2").is_err());
    }
}
