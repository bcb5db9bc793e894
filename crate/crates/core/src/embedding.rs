//! Prompt embeddings and prompt sets.
//!
//! Embeddings travel through files as `f32` but all arithmetic happens on the
//! `f64` widening, so values loaded from disk are exactly representable in
//! both widths.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real vector used both as a prompt representation and as a denoiser condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wraps `values`, rejecting empty or non-finite vectors.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::usage("embedding must have dimension >= 1"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "embedding entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Embedding(values))
    }

    /// Widens `f32` values; the result is exactly representable as `f32`.
    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Embedding::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// Values rounded to `f32`, the serialization width.
    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }

    /// Rounds every entry to the nearest `f32`.
    pub fn rounded_to_f32(&self) -> Embedding {
        Embedding(self.0.iter().map(|&v| f64::from(v as f32)).collect())
    }

    /// L2-normalized copy. Fails on a zero vector.
    pub fn normalized(&self) -> Result<Embedding> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::domain("cannot normalize a zero-norm embedding"));
        }
        Ok(Embedding(self.0.iter().map(|v| v / n).collect()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(a: &Embedding, b: &Embedding) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::usage(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Cosine similarity `a·b / (‖a‖‖b‖)`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dims(a, b)?;
    cosine_from_parts(
        dot(a.values(), b.values()),
        dot(a.values(), a.values()),
        dot(b.values(), b.values()),
    )
}

/// Cosine similarity from `a·b`, `a·a` and `b·b`.
///
/// Uses `sqrt(‖a‖²‖b‖²)` as the denominator: `sqrt(x²)` is exact in IEEE
/// arithmetic, so identical vectors get similarity exactly 1.
pub(crate) fn cosine_from_parts(ab: f64, aa: f64, bb: f64) -> Result<f64> {
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::domain("cosine undefined for a zero-norm vector"));
    }
    Ok((ab / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine distance `1 − cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

/// Mean of two groups from their means and sizes, as `a + (b − a)·nb/(na+nb)`.
/// Exact when `a == b`, so groups of identical vectors keep that vector.
pub(crate) fn merge_means(a: &[f64], na: usize, b: &[f64], nb: usize) -> Vec<f64> {
    let w = nb as f64 / (na + nb) as f64;
    a.iter().zip(b).map(|(x, y)| x + (y - x) * w).collect()
}

/// Entrywise arithmetic mean.
pub fn mean_embedding<'a, I>(members: I) -> Result<Embedding>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    let mut iter = members.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::usage("mean of an empty embedding list"))?;
    let mut mean = first.values().to_vec();
    for (count, e) in (1usize..).zip(iter) {
        check_dims(first, e)?;
        mean = merge_means(&mean, count, e.values(), 1);
    }
    Ok(Embedding(mean))
}

/// One prompt: a unique id, optional text, and its embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub embedding: Embedding,
}

/// Ordered, validated collection of prompts sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    items: Vec<PromptRecord>,
    dim: usize,
}

impl PromptSet {
    /// Validates uniqueness of ids, uniform dimension, and non-zero norms.
    pub fn new(items: Vec<PromptRecord>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::usage("prompt set must be non-empty"))?;
        let dim = first.embedding.dim();
        let mut seen = HashSet::with_capacity(items.len());
        for (i, rec) in items.iter().enumerate() {
            let label = format!("record {i} (id {:?})", rec.id);
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::parse(label, format!("duplicate id {:?}", rec.id)));
            }
            if rec.embedding.dim() != dim {
                return Err(Error::parse(
                    label,
                    format!(
                        "dimension {} does not match dimension {dim} of the first record",
                        rec.embedding.dim()
                    ),
                ));
            }
            let norm = rec.embedding.norm();
            if norm == 0.0 {
                return Err(Error::parse(label, "embedding has zero norm"));
            }
            if !norm.is_finite() {
                return Err(Error::parse(label, "embedding norm overflows"));
            }
        }
        Ok(PromptSet { items, dim })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[PromptRecord] {
        &self.items
    }

    pub fn get(&self, index: usize) -> Option<&PromptRecord> {
        self.items.get(index)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|r| r.id.as_str())
    }

    pub fn embeddings(&self) -> impl Iterator<Item = &Embedding> {
        self.items.iter().map(|r| &r.embedding)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|r| r.id == id)
    }

    /// L2-normalizes every embedding (rounded back to `f32` precision).
    pub fn normalized(&self) -> Result<PromptSet> {
        let items = self
            .items
            .iter()
            .map(|r| {
                Ok(PromptRecord {
                    embedding: r.embedding.normalized()?.rounded_to_f32(),
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PromptSet::new(items)
    }

    /// Same ids and texts, new embeddings.
    pub fn with_embeddings(&self, embeddings: Vec<Embedding>) -> Result<PromptSet> {
        if embeddings.len() != self.len() {
            return Err(Error::usage("embedding count does not match prompt count"));
        }
        let items = self
            .items
            .iter()
            .zip(embeddings)
            .map(|(r, embedding)| PromptRecord {
                id: r.id.clone(),
                prompt: r.prompt.clone(),
                embedding,
            })
            .collect();
        PromptSet::new(items)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_distance_examples() {
        assert_eq!(
            cosine_distance(&e(&[1.0, 0.0]), &e(&[1.0, 0.0])).unwrap(),
            0.0
        );
        assert_eq!(
            cosine_distance(&e(&[1.0, 0.0]), &e(&[0.0, 1.0])).unwrap(),
            1.0
        );
        assert_eq!(
            cosine_distance(&e(&[1.0, 0.0]), &e(&[-1.0, 0.0])).unwrap(),
            2.0
        );
    }

    #[test]
    fn cosine_distance_errors() {
        assert!(matches!(
            cosine_distance(&e(&[0.0, 0.0]), &e(&[1.0, 0.0])),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            cosine_distance(&e(&[1.0, 0.0]), &e(&[1.0, 0.0, 0.0])),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_embedding([&e(&[1.0, 0.0])]).unwrap(), e(&[1.0, 0.0]));
        assert_eq!(
            mean_embedding([&e(&[1.0, 0.0]), &e(&[0.0, 1.0])]).unwrap(),
            e(&[0.5, 0.5])
        );
        assert_eq!(
            mean_embedding([&e(&[2.0, 0.0]), &e(&[0.0, 2.0]), &e(&[1.0, 1.0])]).unwrap(),
            e(&[1.0, 1.0])
        );
        assert!(matches!(
            mean_embedding(std::iter::empty::<&Embedding>()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
        assert!(Embedding::new(vec![]).is_err());
    }

    #[test]
    fn prompt_set_validation() {
        let rec = |id: &str, v: &[f64]| PromptRecord {
            id: id.into(),
            prompt: None,
            embedding: e(v),
        };
        assert!(PromptSet::new(vec![]).is_err());
        let dup = PromptSet::new(vec![rec("a", &[1.0]), rec("a", &[2.0])]).unwrap_err();
        assert!(dup.to_string().contains("\"a\""), "{dup}");
        let mismatch = PromptSet::new(vec![rec("a", &[1.0]), rec("b", &[1.0, 2.0])]).unwrap_err();
        assert!(mismatch.to_string().contains("\"b\""), "{mismatch}");
        assert!(PromptSet::new(vec![rec("a", &[0.0])]).is_err());
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim)
            .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_zero_on_self(a in nonzero_vec(5), b in nonzero_vec(5)) {
            let (a, b) = (e(&a), e(&b));
            let ab = cosine_distance(&a, &b).unwrap();
            let ba = cosine_distance(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=2.0).contains(&ab));
            prop_assert_eq!(cosine_distance(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn cosine_zero_for_positive_multiples(a in nonzero_vec(4), scale in 0.01f64..100.0) {
            let scaled = e(&a.iter().map(|x| x * scale).collect::<Vec<_>>());
            prop_assert!(cosine_distance(&e(&a), &scaled).unwrap().abs() < 1e-12);
        }

        #[test]
        fn mean_of_copies_is_identity(v in prop::collection::vec(-1e3f32..1e3, 1..8), k in 1usize..50) {
            let emb = Embedding::from_f32(&v).unwrap();
            let copies = vec![emb.clone(); k];
            prop_assert_eq!(mean_embedding(&copies).unwrap(), emb);
        }
    }
}
