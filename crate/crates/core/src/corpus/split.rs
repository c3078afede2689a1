use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Manifest, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "split ratios must be positive, got {all:?}"
            )));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Identity counts for `n` identities: val and test take the floor of
    /// their quota, train takes the rest, and every split keeps at least one.
    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        if n < 3 {
            return Err(Error::InsufficientIdentities(format!(
                "{n} identities cannot fill 3 splits"
            )));
        }
        let quota = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let mut val = quota(self.val).max(1);
        let mut test = quota(self.test).max(1);
        while val + test > n - 1 {
            if val >= test {
                val -= 1;
            } else {
                test -= 1;
            }
        }
        Ok([n - val - test, val, test])
    }
}

/// Assigns every identity, and with it all of its items, to exactly one of
/// train/val/test.
pub fn split_by_identity(m: &Manifest, ratios: SplitRatios, seed: u64) -> Result<Manifest> {
    let mut identities: Vec<String> = m.identities().into_iter().map(str::to_string).collect();
    let [n_train, n_val, _] = ratios.counts(identities.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    identities.shuffle(&mut rng);
    let assignment: std::collections::BTreeMap<String, Split> = identities
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let s = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (id, s)
        })
        .collect();
    let records = m
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.split = assignment[&r.identity_id];
            r
        })
        .collect();
    Manifest::new(records, m.source_dims().clone(), m.seed())
}
