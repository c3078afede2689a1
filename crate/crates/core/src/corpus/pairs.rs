use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Manifest, Split};
use crate::codec::{self, parse_error};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairLabel {
    Genuine,
    Impostor,
}

impl PairLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PairLabel::Genuine => "genuine",
            PairLabel::Impostor => "impostor",
        }
    }
}

impl fmt::Display for PairLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(PairLabel::Genuine),
            "impostor" => Ok(PairLabel::Impostor),
            other => Err(Error::InvalidInput(format!("unknown pair label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VerificationPair {
    pub ref_item: String,
    pub probe_item: String,
    pub label: PairLabel,
}

/// All genuine pairs of `split`, plus either every impostor pair or a
/// uniform sample of `impostor_cap` of them drawn without replacement.
///
/// Pairs are unordered; `ref_item` is always the lexically smaller id.
/// Genuine pairs come first, each group in enumeration order.
pub fn generate_pairs(
    m: &Manifest,
    split: Split,
    impostor_cap: Option<usize>,
    seed: u64,
) -> Result<Vec<VerificationPair>> {
    let items: Vec<_> = m.in_split(split).collect();
    let n_ids = items
        .iter()
        .map(|r| r.identity_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    if items.len() < 2 || n_ids < 2 {
        return Err(Error::InsufficientIdentities(format!(
            "split `{split}` has {} items over {n_ids} identities; need at least 2 of each",
            items.len()
        )));
    }

    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let (a, b) = (items[i], items[j]);
            let pair = |label| VerificationPair {
                ref_item: a.item_id.clone(),
                probe_item: b.item_id.clone(),
                label,
            };
            if a.identity_id == b.identity_id {
                genuine.push(pair(PairLabel::Genuine));
            } else {
                impostor.push(pair(PairLabel::Impostor));
            }
        }
    }

    if let Some(cap) = impostor_cap {
        if cap < impostor.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = rand::seq::index::sample(&mut rng, impostor.len(), cap).into_vec();
            keep.sort_unstable();
            impostor = keep.into_iter().map(|k| impostor[k].clone()).collect();
        }
    }
    genuine.extend(impostor);
    Ok(genuine)
}

pub fn render_pairs(pairs: &[VerificationPair]) -> String {
    let mut out = String::from("ref_item,probe_item,label\n");
    for p in pairs {
        out.push_str(&format!("{},{},{}\n", p.ref_item, p.probe_item, p.label));
    }
    out
}

pub fn save_pairs(pairs: &[VerificationPair], path: &Path) -> Result<()> {
    codec::write_text(path, &render_pairs(pairs))
}

pub fn load_pairs(path: &Path) -> Result<Vec<VerificationPair>> {
    let text = codec::read_text(path)?;
    let mut lines = text.split_terminator('\n').enumerate();
    match lines.next() {
        Some((_, "ref_item,probe_item,label")) => {}
        _ => {
            return Err(parse_error(
                path,
                1,
                "expected header `ref_item,probe_item,label`",
            ))
        }
    }
    lines
        .map(|(idx, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(parse_error(path, idx + 1, "expected 3 columns"));
            }
            Ok(VerificationPair {
                ref_item: cols[0].to_string(),
                probe_item: cols[1].to_string(),
                label: cols[2]
                    .parse()
                    .map_err(|e: Error| parse_error(path, idx + 1, e.to_string()))?,
            })
        })
        .collect()
}

/// Short content hash identifying a pair protocol.
pub fn protocol_hash(pairs: &[VerificationPair]) -> String {
    let digest = Sha256::digest(render_pairs(pairs).as_bytes());
    hex::encode(&digest[..8])
}
