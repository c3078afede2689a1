//! Embedding corpus: records, manifest files, identity-disjoint splits,
//! verification pair protocols and a synthetic generator.

mod manifest;
mod pairs;
mod split;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

pub use manifest::{load_manifest, parse_manifest, render_manifest, save_manifest};
pub use pairs::{
    generate_pairs, load_pairs, protocol_hash, render_pairs, save_pairs, PairLabel,
    VerificationPair,
};
pub use split::{split_by_identity, SplitRatios};
pub use synth::{synth_generate, SynthConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::InvalidInput(format!("unknown split `{other}`"))),
        }
    }
}

/// One item (a painting, in the motivating use) with one embedding per
/// source model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub item_id: String,
    pub identity_id: String,
    pub split: Split,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingRecord {
    pub fn new(item_id: impl Into<String>, identity_id: impl Into<String>) -> Self {
        Self {
            item_id: item_id.into(),
            identity_id: identity_id.into(),
            split: Split::Unassigned,
            vectors: BTreeMap::new(),
        }
    }

    pub fn with_vector(mut self, tag: impl Into<String>, v: Vec<f64>) -> Self {
        self.vectors.insert(tag.into(), v);
        self
    }

    pub fn vector(&self, tag: &str) -> Result<&[f64]> {
        self.vectors
            .get(tag)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingSource {
                item: self.item_id.clone(),
                tag: tag.to_string(),
            })
    }
}

/// Validated, immutable collection of records kept in `item_id` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<EmbeddingRecord>,
    source_dims: BTreeMap<String, usize>,
    seed: u64,
}

impl Manifest {
    /// Validates `records` against explicitly declared source dimensions.
    pub fn new(
        mut records: Vec<EmbeddingRecord>,
        source_dims: BTreeMap<String, usize>,
        seed: u64,
    ) -> Result<Self> {
        for tag in source_dims.keys() {
            validate_tag(tag)?;
        }
        records.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        for pair in records.windows(2) {
            if pair[0].item_id == pair[1].item_id {
                return Err(Error::DuplicateItem(pair[0].item_id.clone()));
            }
        }
        let mut identity_split: BTreeMap<&str, Split> = BTreeMap::new();
        for r in &records {
            validate_id(&r.item_id, "item_id")?;
            validate_id(&r.identity_id, "identity_id")?;
            if r.vectors.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "record `{}` has no vectors",
                    r.item_id
                )));
            }
            for (tag, v) in &r.vectors {
                let expected = *source_dims.get(tag).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "record `{}` uses undeclared source `{tag}`",
                        r.item_id
                    ))
                })?;
                if v.len() != expected {
                    return Err(Error::DimensionMismatch {
                        record: r.item_id.clone(),
                        line: 0,
                        tag: tag.clone(),
                        expected,
                        found: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "record `{}` source `{tag}` has non-finite values",
                        r.item_id
                    )));
                }
            }
            match identity_split.insert(&r.identity_id, r.split) {
                Some(prev) if prev != r.split => {
                    return Err(Error::InvalidInput(format!(
                        "identity `{}` appears in both `{prev}` and `{}`",
                        r.identity_id, r.split
                    )));
                }
                _ => {}
            }
        }
        Ok(Self {
            records,
            source_dims,
            seed,
        })
    }

    /// Like [`Manifest::new`] with source dimensions taken from the records.
    pub fn from_records(records: Vec<EmbeddingRecord>, seed: u64) -> Result<Self> {
        let mut dims = BTreeMap::new();
        for r in &records {
            for (tag, v) in &r.vectors {
                dims.entry(tag.clone()).or_insert(v.len());
            }
        }
        Self::new(records, dims, seed)
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    pub fn source_dims(&self) -> &BTreeMap<String, usize> {
        &self.source_dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&EmbeddingRecord> {
        self.records
            .binary_search_by(|r| r.item_id.as_str().cmp(item_id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &EmbeddingRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn identities(&self) -> BTreeSet<&str> {
        self.records
            .iter()
            .map(|r| r.identity_id.as_str())
            .collect()
    }

    pub fn has_source(&self, tag: &str) -> bool {
        self.source_dims.contains_key(tag)
    }

    /// Returns a copy with one more source attached to every record.
    /// `vectors` is indexed like [`Manifest::records`].
    pub fn with_source(&self, tag: &str, vectors: Vec<Vec<f64>>) -> Result<Manifest> {
        if vectors.len() != self.records.len() {
            return Err(Error::InvalidInput(format!(
                "{} vectors for {} records",
                vectors.len(),
                self.records.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut dims = self.source_dims.clone();
        dims.insert(tag.to_string(), dim);
        let records = self
            .records
            .iter()
            .zip(vectors)
            .map(|(r, v)| {
                let mut r = r.clone();
                r.vectors.insert(tag.to_string(), v);
                r
            })
            .collect();
        Manifest::new(records, dims, self.seed)
    }
}

fn validate_id(id: &str, what: &str) -> Result<()> {
    if id.is_empty() || id.starts_with('#') || id.chars().any(|c| c.is_whitespace() || c == ',') {
        return Err(Error::InvalidInput(format!(
            "{what} `{id}` must be non-empty, not start with `#`, and contain no whitespace or commas"
        )));
    }
    Ok(())
}

pub(crate) fn validate_tag(tag: &str) -> Result<()> {
    if tag.is_empty()
        || tag
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, ',' | ':' | '='))
    {
        return Err(Error::InvalidInput(format!(
            "source tag `{tag}` must be non-empty and contain no whitespace, `,`, `:` or `=`"
        )));
    }
    Ok(())
}
