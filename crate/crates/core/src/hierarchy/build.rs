use std::cmp::Ordering;

use crate::embedding::{cosine_from_parts, dot, merge_means, Embedding, PromptSet};
use crate::error::Result;

use super::{EmbeddingTree, Merge, NodeId};

/// Total order on candidate merges: distance first, then the pair of cluster
/// ranks. A cluster's rank is the position of its smallest member id in
/// sorted id order, so ties resolve to the lexicographically smallest
/// `(min member id, max member id)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PairKey {
    pub distance: f64,
    pub lo: usize,
    pub hi: usize,
}

impl PairKey {
    pub fn new(distance: f64, rank_a: usize, rank_b: usize) -> Self {
        PairKey {
            distance,
            lo: rank_a.min(rank_b),
            hi: rank_a.max(rank_b),
        }
    }

    pub fn cmp(&self, other: &PairKey) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

/// Position of each prompt in sorted-id order.
pub(crate) fn id_ranks(prompts: &PromptSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..prompts.len()).collect();
    order.sort_by(|&a, &b| prompts.items()[a].id.cmp(&prompts.items()[b].id));
    let mut rank = vec![0; prompts.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

struct Cluster {
    node: NodeId,
    rank: usize,
    count: usize,
    mean: Vec<f64>,
    sq_norm: f64,
}

impl Cluster {
    fn new(node: NodeId, rank: usize, count: usize, mean: Vec<f64>) -> Self {
        let sq_norm = dot(&mean, &mean);
        Cluster {
            node,
            rank,
            count,
            mean,
            sq_norm,
        }
    }
}

/// Distance matrix over cluster slots plus each row's best partner.
struct Workspace {
    n: usize,
    dist: Vec<f64>,
    best: Vec<Option<(PairKey, usize)>>,
}

impl Workspace {
    fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.dist[i * self.n + j] = v;
        self.dist[j * self.n + i] = v;
    }
}

fn distance(a: &Cluster, b: &Cluster) -> Result<f64> {
    Ok(1.0 - cosine_from_parts(dot(&a.mean, &b.mean), a.sq_norm, b.sq_norm)?)
}

fn rescan(ws: &mut Workspace, slots: &[Option<Cluster>], i: usize) {
    let ci = slots[i].as_ref().expect("active slot");
    let mut best: Option<(PairKey, usize)> = None;
    for (j, cj) in slots.iter().enumerate() {
        let Some(cj) = cj else { continue };
        if j == i {
            continue;
        }
        let key = PairKey::new(ws.d(i, j), ci.rank, cj.rank);
        if best.is_none_or(|(b, _)| key.cmp(&b) == Ordering::Less) {
            best = Some((key, j));
        }
    }
    ws.best[i] = best;
}

/// Builds the embedding tree by greedy centroid-linkage merging.
///
/// Keeps the full slot-by-slot distance matrix and a cached best partner per
/// row; after a merge only rows whose cached partner disappeared are
/// rescanned, which makes the typical cost quadratic in N.
pub fn build_tree(prompts: &PromptSet) -> Result<EmbeddingTree> {
    let n = prompts.len();
    let rank = id_ranks(prompts);
    let mut slots: Vec<Option<Cluster>> = prompts
        .embeddings()
        .enumerate()
        .map(|(i, e)| Some(Cluster::new(NodeId(i), rank[i], 1, e.values().to_vec())))
        .collect();

    let mut ws = Workspace {
        n,
        dist: vec![0.0; n * n],
        best: vec![None; n],
    };
    for i in 0..n {
        for j in i + 1..n {
            let d = distance(slots[i].as_ref().unwrap(), slots[j].as_ref().unwrap())?;
            ws.set(i, j, d);
        }
    }
    for i in 0..n {
        rescan(&mut ws, &slots, i);
    }

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut embeddings = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let (i, j, key) = ws
            .best
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.map(|(key, j)| (i, j, key)))
            .min_by(|x, y| x.2.cmp(&y.2))
            .expect("at least two active clusters");
        let a = slots[i].take().unwrap();
        let b = slots[j].take().unwrap();
        ws.best[j] = None;

        // Lower-ranked cluster first so children order is canonical.
        let (first, second) = if a.rank <= b.rank { (&a, &b) } else { (&b, &a) };
        merges.push(Merge {
            a: first.node,
            b: second.node,
            distance: key.distance,
        });
        let mean = merge_means(&a.mean, a.count, &b.mean, b.count);
        let merged = Cluster::new(
            NodeId(n + step),
            a.rank.min(b.rank),
            a.count + b.count,
            mean,
        );
        embeddings.push(Embedding::new(merged.mean.clone())?);
        slots[i] = Some(merged);

        let merged = slots[i].as_ref().unwrap();
        let mut fresh = Vec::new();
        for (k, ck) in slots.iter().enumerate() {
            if k != i {
                if let Some(ck) = ck {
                    fresh.push((k, distance(merged, ck)?, ck.rank));
                }
            }
        }
        let merged_rank = merged.rank;
        for &(k, d, _) in &fresh {
            ws.set(i, k, d);
        }
        for (k, d, rank_k) in fresh {
            match ws.best[k] {
                Some((_, partner)) if partner == i || partner == j => rescan(&mut ws, &slots, k),
                Some((cur, _)) => {
                    let key = PairKey::new(d, rank_k, merged_rank);
                    if key.cmp(&cur) == Ordering::Less {
                        ws.best[k] = Some((key, i));
                    }
                }
                None => rescan(&mut ws, &slots, k),
            }
        }
        rescan(&mut ws, &slots, i);
    }

    EmbeddingTree::from_merges(prompts, &merges, embeddings)
}
