//! Embedding-level fusion: per-source L2 normalization, concatenation and
//! re-normalization.
//!
//! Because each source is unit-normalized before concatenation, the cosine
//! between two fused vectors over `k` sources is exactly the mean of the
//! per-source cosines. Source dimensionality does not weight the result.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct FusionSpec {
    sources: Vec<String>,
    dims: Vec<usize>,
    weights: Vec<f64>,
}

impl FusionSpec {
    pub fn new(sources: Vec<String>, dims: Vec<usize>) -> Result<Self> {
        let k = sources.len();
        Self::weighted(sources, dims, vec![1.0; k])
    }

    /// Per-source multipliers applied after normalization. Equal weights
    /// reproduce plain concatenation.
    pub fn weighted(sources: Vec<String>, dims: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::InvalidInput(
                "fusion needs at least one source".into(),
            ));
        }
        if dims.len() != sources.len() || weights.len() != sources.len() {
            return Err(Error::InvalidInput(
                "fusion sources, dims and weights differ in length".into(),
            ));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidInput("fusion source with dimension 0".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput(
                "fusion weights must be positive".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &sources {
            if !seen.insert(s) {
                return Err(Error::InvalidInput(format!(
                    "fusion source `{s}` listed twice"
                )));
            }
        }
        Ok(Self {
            sources,
            dims,
            weights,
        })
    }

    /// Resolves dimensions from a manifest's declared sources.
    pub fn from_manifest_dims(sources: &[String], dims: &BTreeMap<String, usize>) -> Result<Self> {
        let d = sources
            .iter()
            .map(|s| {
                dims.get(s).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("fusion source `{s}` not in manifest"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sources.to_vec(), d)
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn output_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Manifest tag for fused vectors, e.g. `fused[clip-lora+fr-base]`.
    pub fn tag(&self) -> String {
        format!("fused[{}]", self.sources.join("+"))
    }
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// `vectors[i]` belongs to `spec.sources()[i]`.
pub fn fuse(vectors: &[&[f64]], spec: &FusionSpec) -> Result<Vec<f64>> {
    if vectors.len() != spec.sources.len() {
        return Err(Error::InvalidInput(format!(
            "fusion expects {} sources, got {}",
            spec.sources.len(),
            vectors.len()
        )));
    }
    let mut cat = Vec::with_capacity(spec.output_dim());
    for ((v, &dim), (name, &w)) in vectors
        .iter()
        .zip(&spec.dims)
        .zip(spec.sources.iter().zip(&spec.weights))
    {
        if v.len() != dim {
            return Err(Error::shape(
                "fuse",
                format!("source `{name}` has dim {}, expected {dim}", v.len()),
            ));
        }
        cat.extend(l2_normalize(v)?.into_iter().map(|x| x * w));
    }
    l2_normalize(&cat)
}

/// Looks up each spec source by tag and fuses.
pub fn fuse_record(vectors: &BTreeMap<String, Vec<f64>>, spec: &FusionSpec) -> Result<Vec<f64>> {
    let parts = spec
        .sources
        .iter()
        .map(|s| {
            vectors
                .get(s)
                .map(Vec::as_slice)
                .ok_or_else(|| Error::InvalidInput(format!("missing fusion source `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    fuse(&parts, spec)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "cosine",
            format!("{} vs {}", a.len(), b.len()),
        ));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity of the two fused vectors.
pub fn fused_score(item_a: &[&[f64]], item_b: &[&[f64]], spec: &FusionSpec) -> Result<f64> {
    let fa = fuse(item_a, spec)?;
    let fb = fuse(item_b, spec)?;
    Ok(dot(&fa, &fb).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dims: &[usize]) -> FusionSpec {
        FusionSpec::new(
            (0..dims.len()).map(|i| format!("s{i}")).collect(),
            dims.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(l2_normalize(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        let u = vec![0.6, 0.8];
        assert_eq!(l2_normalize(&u).unwrap(), u);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn single_source_is_normalize() {
        let v = [1.0, -2.0, 2.0];
        assert_eq!(fuse(&[&v], &spec(&[3])).unwrap(), l2_normalize(&v).unwrap());
    }

    #[test]
    fn unit_inputs_concatenate_to_norm_sqrt_k() {
        let a = [0.6, 0.8];
        let b = [1.0, 0.0, 0.0];
        let c = [0.0, 1.0];
        let f = fuse(&[&a, &b, &c], &spec(&[2, 3, 2])).unwrap();
        // Every fused entry is the unit entry divided by sqrt(3).
        assert!((f[0] - 0.6 / 3f64.sqrt()).abs() < 1e-15);
        assert!((norm(&f) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_cases() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        let s = spec(&[2, 2]);
        assert!((fused_score(&[&a, &b], &[&a, &b], &s).unwrap() - 1.0).abs() < 1e-15);
        // Per-source cosines 1 and 0.
        assert!((fused_score(&[&a, &a], &[&a, &b], &s).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let s = spec(&[2, 2]);
        assert!(fuse(&[&[1.0, 0.0]], &s).is_err());
        assert!(fuse(&[&[1.0, 0.0], &[0.0, 0.0]], &s).is_err());
        assert!(fuse(&[&[1.0, 0.0], &[1.0, 0.0, 0.0]], &s).is_err());
        assert!(FusionSpec::new(vec![], vec![]).is_err());
        assert!(FusionSpec::new(vec!["a".into(), "a".into()], vec![1, 1]).is_err());
    }

    #[test]
    fn tag_records_order() {
        let s = FusionSpec::new(vec!["clip-lora".into(), "fr-base".into()], vec![8, 64]).unwrap();
        assert_eq!(s.tag(), "fused[clip-lora+fr-base]");
        assert_eq!(s.output_dim(), 72);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn item(dims: &[usize]) -> impl Strategy<Value = Vec<Vec<f64>>> {
            dims.iter()
                .map(|&d| {
                    proptest::collection::vec(-10.0f64..10.0, d)
                        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
                })
                .collect::<Vec<_>>()
        }

        fn pair() -> impl Strategy<Value = (Vec<usize>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
            proptest::collection::vec(1usize..12, 1..4)
                .prop_flat_map(|dims| (Just(dims.clone()), item(&dims), item(&dims)))
        }

        fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
            v.iter().map(Vec::as_slice).collect()
        }

        proptest! {
            #[test]
            fn fused_score_is_mean_of_cosines((dims, a, b) in pair()) {
                let s = spec(&dims);
                let fused = fused_score(&refs(&a), &refs(&b), &s).unwrap();
                let mean = a.iter().zip(&b).map(|(x, y)| cosine(x, y).unwrap()).sum::<f64>()
                    / dims.len() as f64;
                prop_assert!((fused - mean).abs() < 1e-12);
            }

            #[test]
            fn fused_vector_has_unit_norm((dims, a, _b) in pair()) {
                let f = fuse(&refs(&a), &spec(&dims)).unwrap();
                prop_assert_eq!(f.len(), dims.iter().sum::<usize>());
                let n = f.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() < 1e-12);
            }

            #[test]
            fn per_source_scaling_does_not_matter(
                (dims, a, b) in pair(),
                logk in proptest::collection::vec(-6.0f64..6.0, 3),
            ) {
                let s = spec(&dims);
                let scaled: Vec<Vec<f64>> = a
                    .iter()
                    .zip(&logk)
                    .map(|(v, k)| v.iter().map(|x| x * k.exp()).collect())
                    .collect();
                let f0 = fused_score(&refs(&a), &refs(&b), &s).unwrap();
                let f1 = fused_score(&refs(&scaled), &refs(&b), &s).unwrap();
                prop_assert!((f0 - f1).abs() < 1e-12);
            }

            #[test]
            fn fused_score_is_symmetric((dims, a, b) in pair()) {
                let s = spec(&dims);
                let ab = fused_score(&refs(&a), &refs(&b), &s).unwrap();
                let ba = fused_score(&refs(&b), &refs(&a), &s).unwrap();
                prop_assert!((ab - ba).abs() < 1e-15);
            }
        }
    }
}
