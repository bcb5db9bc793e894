//! Agglomerative embedding tree.
//!
//! Clusters are merged greedily by the cosine distance between their mean
//! embeddings. Each internal node records the merge distance as its raw
//! heterogeneity score; scores are then clamped top-down so that they never
//! increase from a parent to a child.
//!
//! Node numbering is canonical: leaf `i` is prompt `i` of the input set and
//! internal nodes are numbered `N, N+1, ...` in merge order.

mod build;
mod export;
mod reference;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::embedding::{merge_means, Embedding, PromptSet};
use crate::error::{Error, Result};

pub use build::build_tree;
pub use export::{NodeRecord, TreeFile};
pub use reference::{reference_build_tree, REFERENCE_MAX_PROMPTS};

/// Index of a node in an [`EmbeddingTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    /// `None` for leaves, both children otherwise.
    pub children: Option<(NodeId, NodeId)>,
    /// Number of member prompts.
    pub size: usize,
    /// Mean of the member prompts' embeddings.
    pub embedding: Embedding,
    /// Heterogeneity after top-down clamping; 0 for leaves.
    pub score: f64,
    /// Merge distance before clamping; 0 for leaves.
    pub raw_score: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary merge tree over a prompt set.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTree {
    nodes: Vec<TreeNode>,
    root: NodeId,
    prompt_ids: Vec<String>,
    leaf_of: HashMap<String, NodeId>,
    c_max: f64,
    inversion_count: usize,
    depth: Vec<usize>,
    enter: Vec<usize>,
    exit: Vec<usize>,
}

/// One merge as produced by a clustering routine: the two merged nodes and
/// the distance between their means.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Merge {
    pub a: NodeId,
    pub b: NodeId,
    pub distance: f64,
}

impl EmbeddingTree {
    /// Assembles a tree from leaves (prompt order) plus a merge sequence, then
    /// clamps scores and builds the traversal indices.
    pub(crate) fn from_merges(
        prompts: &PromptSet,
        merges: &[Merge],
        internal_embeddings: Vec<Embedding>,
    ) -> Result<Self> {
        let n = prompts.len();
        if merges.len() + 1 != n || internal_embeddings.len() != merges.len() {
            return Err(Error::usage("merge sequence does not cover the prompt set"));
        }
        let mut nodes: Vec<TreeNode> = prompts
            .items()
            .iter()
            .enumerate()
            .map(|(i, rec)| TreeNode {
                id: NodeId(i),
                parent: None,
                children: None,
                size: 1,
                embedding: rec.embedding.clone(),
                score: 0.0,
                raw_score: 0.0,
            })
            .collect();
        for (m, embedding) in merges.iter().zip(internal_embeddings) {
            let id = NodeId(nodes.len());
            for child in [m.a, m.b] {
                let node = nodes.get_mut(child.0).ok_or_else(|| {
                    Error::usage(format!("merge references unknown node {child}"))
                })?;
                if node.parent.is_some() {
                    return Err(Error::usage(format!("node {child} merged twice")));
                }
                node.parent = Some(id);
            }
            let size = nodes[m.a.0].size + nodes[m.b.0].size;
            nodes.push(TreeNode {
                id,
                parent: None,
                children: Some((m.a, m.b)),
                size,
                embedding,
                score: m.distance,
                raw_score: m.distance,
            });
        }
        let prompt_ids: Vec<String> = prompts.ids().map(str::to_owned).collect();
        Self::assemble(nodes, prompt_ids)
    }

    /// Clamps scores top-down, counts inversions and indexes the tree.
    fn assemble(mut nodes: Vec<TreeNode>, prompt_ids: Vec<String>) -> Result<Self> {
        let roots: Vec<NodeId> = nodes
            .iter()
            .filter(|n| n.parent.is_none())
            .map(|n| n.id)
            .collect();
        let root = match roots.as_slice() {
            [r] => *r,
            _ => {
                return Err(Error::usage(format!(
                    "tree must have one root, found {}",
                    roots.len()
                )))
            }
        };
        // Parents always carry larger ids than their children.
        let mut inversion_count = 0;
        for i in (0..nodes.len()).rev() {
            let clamped = match nodes[i].parent {
                None => nodes[i].raw_score,
                Some(p) => {
                    let parent_score = nodes[p.0].score;
                    if nodes[i].raw_score > parent_score {
                        inversion_count += 1;
                        parent_score
                    } else {
                        nodes[i].raw_score
                    }
                }
            };
            nodes[i].score = clamped;
        }

        let leaf_of = prompt_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), NodeId(i)))
            .collect();
        let mut tree = EmbeddingTree {
            c_max: nodes[root.0].score,
            depth: vec![0; nodes.len()],
            enter: vec![0; nodes.len()],
            exit: vec![0; nodes.len()],
            nodes,
            root,
            prompt_ids,
            leaf_of,
            inversion_count,
        };
        tree.index();
        Ok(tree)
    }

    fn index(&mut self) {
        let mut clock = 0;
        let mut stack = vec![(self.root, 0usize, false)];
        while let Some((id, depth, done)) = stack.pop() {
            if done {
                self.exit[id.0] = clock;
                continue;
            }
            self.depth[id.0] = depth;
            self.enter[id.0] = clock;
            clock += 1;
            stack.push((id, depth, true));
            if let Some((a, b)) = self.nodes[id.0].children {
                stack.push((b, depth + 1, false));
                stack.push((a, depth + 1, false));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_prompts(&self) -> usize {
        self.prompt_ids.len()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.0]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Root score, the largest heterogeneity in the tree.
    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Number of nodes whose raw score exceeded their parent's score.
    pub fn inversion_count(&self) -> usize {
        self.inversion_count
    }

    pub fn prompt_ids(&self) -> &[String] {
        &self.prompt_ids
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.depth[id.0]
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Leaf node of a prompt, by id.
    pub fn leaf_of(&self, prompt_id: &str) -> Result<NodeId> {
        self.leaf_of
            .get(prompt_id)
            .copied()
            .ok_or_else(|| Error::usage(format!("unknown prompt id {prompt_id:?}")))
    }

    /// Leaf node of the prompt at `index` in the original set.
    pub fn leaf(&self, index: usize) -> NodeId {
        NodeId(index)
    }

    /// Score of the parent, `+∞` for the root (the virtual parent above it).
    pub fn parent_score(&self, id: NodeId) -> f64 {
        match self.nodes[id.0].parent {
            Some(p) => self.nodes[p.0].score,
            None => f64::INFINITY,
        }
    }

    pub fn is_ancestor_or_self(&self, ancestor: NodeId, node: NodeId) -> bool {
        self.enter[ancestor.0] <= self.enter[node.0] && self.exit[node.0] <= self.exit[ancestor.0]
    }

    /// Node ids from the prompt's leaf up to the root.
    pub fn path_to_root(&self, prompt_id: &str) -> Result<Vec<NodeId>> {
        Ok(self.path_from(self.leaf_of(prompt_id)?))
    }

    pub(crate) fn path_from(&self, start: NodeId) -> Vec<NodeId> {
        let mut path = vec![start];
        let mut cur = start;
        while let Some(p) = self.nodes[cur.0].parent {
            path.push(p);
            cur = p;
        }
        path
    }

    /// Prompt indices under `id`, ascending.
    pub fn members(&self, id: NodeId) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes[id.0].size);
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            match self.nodes[n.0].children {
                None => out.push(n.0),
                Some((a, b)) => {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn member_ids(&self, id: NodeId) -> Vec<&str> {
        self.members(id)
            .into_iter()
            .map(|i| self.prompt_ids[i].as_str())
            .collect()
    }

    /// Same structure and scores, with node embeddings recomputed as member
    /// means of `prompts` (matched by id). The random-encoding ablation
    /// selects nodes on a tree built from random vectors but conditions
    /// generation on the true embeddings through this mapping.
    pub fn with_member_means(&self, prompts: &PromptSet) -> Result<EmbeddingTree> {
        if prompts.len() != self.num_prompts() {
            return Err(Error::usage("prompt set size does not match the tree"));
        }
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for (i, id) in self.prompt_ids.iter().enumerate() {
            let pos = prompts.position(id).ok_or_else(|| {
                Error::usage(format!("prompt {id:?} missing from the prompt set"))
            })?;
            debug_assert_eq!(self.nodes[i].id, NodeId(i));
            means.push(prompts.items()[pos].embedding.values().to_vec());
        }
        for i in self.num_prompts()..self.nodes.len() {
            let (a, b) = self.nodes[i].children.expect("internal node");
            let (na, nb) = (self.nodes[a.0].size, self.nodes[b.0].size);
            means.push(merge_means(&means[a.0], na, &means[b.0], nb));
        }
        let mut tree = self.clone();
        for (node, mean) in tree.nodes.iter_mut().zip(means) {
            node.embedding = Embedding::new(mean)?;
        }
        Ok(tree)
    }

    /// Nested, order-independent rendering of the tree's shape over prompt
    /// ids. Two trees with equal canonical forms are equal up to renumbering.
    pub fn canonical_form(&self) -> String {
        self.canonical_of(self.root)
    }

    fn canonical_of(&self, id: NodeId) -> String {
        match self.nodes[id.0].children {
            None => format!("{:?}", self.prompt_ids[id.0]),
            Some((a, b)) => {
                let (mut x, mut y) = (self.canonical_of(a), self.canonical_of(b));
                if y < x {
                    std::mem::swap(&mut x, &mut y);
                }
                format!("({x},{y})")
            }
        }
    }

    /// Member-id sets of internal nodes in merge order.
    pub fn merge_sequence(&self) -> Vec<Vec<&str>> {
        (self.num_prompts()..self.nodes.len())
            .map(|i| self.member_ids(NodeId(i)))
            .collect()
    }
}

#[cfg(test)]
mod tests;
