use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EmbeddingRecord, Manifest};
use crate::error::{Error, Result};

/// Synthetic stand-in for a portrait corpus.
///
/// Each identity gets a random unit center per source. An item's vector for
/// source `s` is `normalize(center_s + style·g1 + source_noise[s]·g2)`,
/// where `g1` is drawn once per item and shared by all sources (the
/// depiction style) and `g2` is drawn per source. Both perturbations have
/// per-component variance `1/dim`, so their expected norm equals the
/// configured magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_identities: usize,
    pub items_per_identity: usize,
    pub dim_per_source: BTreeMap<String, usize>,
    pub style_noise: f64,
    pub source_noise: BTreeMap<String, f64>,
    /// Not read from config files; run configs derive it from their own seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_identities: 40,
            items_per_identity: 6,
            dim_per_source: [("clip".to_string(), 32), ("fr".to_string(), 64)].into(),
            style_noise: 0.4,
            source_noise: [("clip".to_string(), 0.3), ("fr".to_string(), 0.2)].into(),
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_identities == 0 || self.items_per_identity == 0 {
            return Err(Error::InvalidInput("synth counts must be >= 1".into()));
        }
        if self.dim_per_source.is_empty() {
            return Err(Error::InvalidInput(
                "synth needs at least one source".into(),
            ));
        }
        for (tag, dim) in &self.dim_per_source {
            super::validate_tag(tag)?;
            if *dim == 0 {
                return Err(Error::InvalidInput(format!(
                    "source `{tag}` has dimension 0"
                )));
            }
        }
        if !(self.style_noise.is_finite() && self.style_noise >= 0.0) {
            return Err(Error::InvalidInput("style_noise must be >= 0".into()));
        }
        for (tag, n) in &self.source_noise {
            if !self.dim_per_source.contains_key(tag) {
                return Err(Error::InvalidInput(format!(
                    "source_noise for unknown source `{tag}`"
                )));
            }
            if !(n.is_finite() && *n >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "source_noise for `{tag}` must be >= 0"
                )));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = crate::numerics::norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let max_dim = *cfg.dim_per_source.values().max().unwrap_or(&1);
    let id_width = cfg.n_identities.saturating_sub(1).to_string().len().max(3);
    let item_width = cfg
        .items_per_identity
        .saturating_sub(1)
        .to_string()
        .len()
        .max(2);

    let mut records = Vec::with_capacity(cfg.n_identities * cfg.items_per_identity);
    for i in 0..cfg.n_identities {
        let identity = format!("s{i:0id_width$}");
        let centers: BTreeMap<&str, Vec<f64>> = cfg
            .dim_per_source
            .iter()
            .map(|(tag, &dim)| (tag.as_str(), normalized(gaussian(&mut rng, dim))))
            .collect();
        for j in 0..cfg.items_per_identity {
            let style = gaussian(&mut rng, max_dim);
            let mut rec =
                EmbeddingRecord::new(format!("{identity}_{j:0item_width$}"), identity.clone());
            for (tag, &dim) in &cfg.dim_per_source {
                let own = gaussian(&mut rng, dim);
                let noise = cfg.source_noise.get(tag).copied().unwrap_or(0.0);
                let scale = 1.0 / (dim as f64).sqrt();
                let v: Vec<f64> = centers[tag.as_str()]
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c + scale * (cfg.style_noise * style[k] + noise * own[k]))
                    .collect();
                rec.vectors.insert(tag.clone(), normalized(v));
            }
            records.push(rec);
        }
    }
    Manifest::new(records, cfg.dim_per_source.clone(), cfg.seed)
}
