use std::cmp::Ordering;

use crate::embedding::{cosine_distance, mean_embedding, PromptSet};
use crate::error::{Error, Result};

use super::build::{id_ranks, PairKey};
use super::{EmbeddingTree, Merge, NodeId};

/// Largest prompt set the reference clusterer accepts.
pub const REFERENCE_MAX_PROMPTS: usize = 64;

/// Straightforward O(N³) clusterer used as a test oracle.
///
/// Every round recomputes each active cluster's mean from its member leaves
/// and scans all pairs for the smallest [`PairKey`]. Shares nothing with
/// [`build_tree`](super::build_tree) beyond the distance function and the
/// tie-break rule.
pub fn reference_build_tree(prompts: &PromptSet) -> Result<EmbeddingTree> {
    let n = prompts.len();
    if n > REFERENCE_MAX_PROMPTS {
        return Err(Error::usage(format!(
            "reference clusterer is limited to {REFERENCE_MAX_PROMPTS} prompts, got {n}"
        )));
    }
    let leaves: Vec<_> = prompts.embeddings().collect();
    let rank = id_ranks(prompts);

    // (node id, member prompt indices)
    let mut active: Vec<(NodeId, Vec<usize>)> = (0..n).map(|i| (NodeId(i), vec![i])).collect();
    let mut merges = Vec::new();
    let mut embeddings = Vec::new();
    while active.len() > 1 {
        let means = active
            .iter()
            .map(|(_, members)| mean_embedding(members.iter().map(|&m| leaves[m])))
            .collect::<Result<Vec<_>>>()?;
        let cluster_rank = |members: &[usize]| members.iter().map(|&m| rank[m]).min().unwrap();

        let mut best: Option<(PairKey, usize, usize)> = None;
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let d = cosine_distance(&means[a], &means[b])?;
                let key = PairKey::new(d, cluster_rank(&active[a].1), cluster_rank(&active[b].1));
                if best.is_none_or(|(k, _, _)| key.cmp(&k) == Ordering::Less) {
                    best = Some((key, a, b));
                }
            }
        }
        let (key, a, b) = best.unwrap();
        let (node_b, members_b) = active.remove(b);
        let (node_a, members_a) = active.remove(a);
        let (first, second) = if cluster_rank(&members_a) <= cluster_rank(&members_b) {
            (node_a, node_b)
        } else {
            (node_b, node_a)
        };
        merges.push(Merge {
            a: first,
            b: second,
            distance: key.distance,
        });
        let mut members = members_a;
        members.extend(members_b);
        members.sort_unstable();
        embeddings.push(mean_embedding(members.iter().map(|&m| leaves[m]))?);
        active.push((NodeId(n + merges.len() - 1), members));
    }
    EmbeddingTree::from_merges(prompts, &merges, embeddings)
}
