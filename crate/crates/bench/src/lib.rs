//! Fixtures shared by the benchmarks.

use shdf_core::{generate_synthetic, PromptSet, SyntheticSpec};

/// A clustered prompt set with `clusters * per_cluster` prompts.
pub fn clustered(clusters: usize, per_cluster: usize, dimension: usize) -> PromptSet {
    generate_synthetic(&SyntheticSpec {
        clusters,
        per_cluster,
        dimension,
        jitter: 0.02,
        seed: 7,
    })
    .expect("valid synthetic spec")
}
