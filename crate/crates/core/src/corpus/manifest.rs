//! Manifest text format.
//!
//! ```text
//! #manifest v1 sources=clip:32,fr:64 seed=7
//! <item_id>\t<identity_id>\t<split>\t<tag>=<v,v,...>[\t<tag>=...]
//! ```
//!
//! Records are written in `item_id` order and tags in lexical order.

use std::collections::BTreeMap;
use std::path::Path;

use super::{EmbeddingRecord, Manifest};
use crate::codec::{self, field, format_values, header_fields, parse_error, parse_values};
use crate::error::{Error, Result};

const MAGIC: &str = "#manifest v1";

pub fn render_manifest(m: &Manifest) -> String {
    let sources: Vec<String> = m
        .source_dims()
        .iter()
        .map(|(tag, dim)| format!("{tag}:{dim}"))
        .collect();
    let mut out = format!("{MAGIC} sources={} seed={}\n", sources.join(","), m.seed());
    for r in m.records() {
        out.push_str(&r.item_id);
        out.push('\t');
        out.push_str(&r.identity_id);
        out.push('\t');
        out.push_str(r.split.as_str());
        for (tag, v) in &r.vectors {
            out.push('\t');
            out.push_str(tag);
            out.push('=');
            out.push_str(&format_values(v));
        }
        out.push('\n');
    }
    out
}

pub fn save_manifest(m: &Manifest, path: &Path) -> Result<()> {
    codec::write_text(path, &render_manifest(m))
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = codec::read_text(path)?;
    parse_manifest(&text, path)
}

/// Parses manifest text; `path` is only used in error messages.
pub fn parse_manifest(text: &str, path: &Path) -> Result<Manifest> {
    let mut lines = text.split_terminator('\n').enumerate();
    let header = match lines.next() {
        Some((_, h)) => h,
        None => return Err(parse_error(path, 1, "missing header")),
    };
    let fields = header_fields(header, MAGIC).map_err(|m| parse_error(path, 1, m))?;
    let seed: u64 = field(&fields, "seed").map_err(|m| parse_error(path, 1, m))?;
    let sources: String = field(&fields, "sources").map_err(|m| parse_error(path, 1, m))?;
    let mut dims = BTreeMap::new();
    if !sources.is_empty() {
        for entry in sources.split(',') {
            let (tag, dim) = entry
                .rsplit_once(':')
                .ok_or_else(|| parse_error(path, 1, format!("bad source entry `{entry}`")))?;
            let dim: usize = dim
                .parse()
                .map_err(|_| parse_error(path, 1, format!("bad dimension in `{entry}`")))?;
            if dims.insert(tag.to_string(), dim).is_some() {
                return Err(parse_error(
                    path,
                    1,
                    format!("source `{tag}` declared twice"),
                ));
            }
        }
    }

    let mut records = Vec::new();
    let mut seen = BTreeMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(parse_error(
                path,
                lineno,
                "expected item_id, identity_id, split and at least one vector",
            ));
        }
        let split = cols[2]
            .parse()
            .map_err(|e: Error| parse_error(path, lineno, e.to_string()))?;
        let mut rec = EmbeddingRecord::new(cols[0], cols[1]);
        rec.split = split;
        for entry in &cols[3..] {
            let (tag, values) = entry
                .split_once('=')
                .ok_or_else(|| parse_error(path, lineno, format!("bad vector field `{entry}`")))?;
            let v = parse_values(values).map_err(|m| parse_error(path, lineno, m))?;
            let expected = *dims.get(tag).ok_or_else(|| {
                parse_error(
                    path,
                    lineno,
                    format!("source `{tag}` not declared in header"),
                )
            })?;
            if v.len() != expected {
                return Err(Error::DimensionMismatch {
                    record: rec.item_id.clone(),
                    line: lineno,
                    tag: tag.to_string(),
                    expected,
                    found: v.len(),
                });
            }
            if rec.vectors.insert(tag.to_string(), v).is_some() {
                return Err(parse_error(
                    path,
                    lineno,
                    format!("source `{tag}` repeated"),
                ));
            }
        }
        if let Some(prev) = seen.insert(rec.item_id.clone(), lineno) {
            return Err(parse_error(
                path,
                lineno,
                format!("duplicate item_id `{}` (first on line {prev})", rec.item_id),
            ));
        }
        records.push(rec);
    }
    Manifest::new(records, dims, seed)
}
