//! Seeded synthetic prompt sets with planted cluster structure.

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, PromptRecord, PromptSet};
use crate::error::{Error, Result};
use crate::rng::{domain, StreamKey};

/// Shape of a synthetic prompt set: `clusters × per_cluster` records in `dimension`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub per_cluster: usize,
    pub dimension: usize,
    /// Per-coordinate standard deviation of the jitter added to each center.
    pub jitter: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn len(&self) -> usize {
        self.clusters * self.per_cluster
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Planted cluster of record `index`.
    pub fn label_of(&self, index: usize) -> usize {
        index / self.per_cluster
    }
}

fn unit_gaussian(key: StreamKey, dim: usize) -> Vec<f64> {
    let mut rng = key.stream();
    loop {
        let v = rng.gaussian_vec(dim);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random unit centers with Gaussian jitter, renormalized and rounded to `f32`.
///
/// Record `i` belongs to cluster `i / per_cluster` and is named
/// `s{i:06}`. Every value depends only on `(seed, i)`, never on generation
/// order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PromptSet> {
    if spec.clusters == 0 || spec.per_cluster == 0 || spec.dimension == 0 {
        return Err(Error::usage(
            "synthetic sets need clusters, per_cluster and dimension >= 1",
        ));
    }
    if !(spec.jitter >= 0.0 && spec.jitter.is_finite()) {
        return Err(Error::usage("jitter must be finite and >= 0"));
    }
    let centers: Vec<Embedding> = (0..spec.clusters)
        .map(|c| {
            let key = StreamKey::path(spec.seed, &[domain::SYNTH_CENTER, c as u64]);
            Embedding::new(unit_gaussian(key, spec.dimension)).map(|e| e.rounded_to_f32())
        })
        .collect::<Result<_>>()?;

    let mut items = Vec::with_capacity(spec.len());
    for i in 0..spec.len() {
        let cluster = spec.label_of(i);
        let center = &centers[cluster];
        let embedding = if spec.jitter == 0.0 {
            center.clone()
        } else {
            let mut rng = StreamKey::path(spec.seed, &[domain::SYNTH_RECORD, i as u64]).stream();
            let jittered: Vec<f64> = center
                .values()
                .iter()
                .map(|c| c + spec.jitter * rng.gaussian())
                .collect();
            Embedding::new(jittered)?.normalized()?.rounded_to_f32()
        };
        items.push(PromptRecord {
            id: format!("s{i:06}"),
            prompt: Some(format!("cluster {cluster} member {}", i % spec.per_cluster)),
            embedding,
        });
    }
    PromptSet::new(items)
}

/// Replaces every embedding by an independent random unit vector of the same
/// dimension, keeping ids and order. Used for the random-encoding ablation.
pub fn randomize_encodings(prompts: &PromptSet, seed: u64) -> Result<PromptSet> {
    let embeddings = (0..prompts.len())
        .map(|i| {
            let key = StreamKey::path(seed, &[domain::RANDOM_ENCODING, i as u64]);
            Embedding::new(unit_gaussian(key, prompts.dim())).map(|e| e.rounded_to_f32())
        })
        .collect::<Result<Vec<_>>>()?;
    prompts.with_embeddings(embeddings)
}
