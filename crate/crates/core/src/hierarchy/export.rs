use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};

use super::{EmbeddingTree, NodeId, TreeNode};

/// JSON form of one tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub members: Vec<String>,
    pub score: f64,
    pub raw_score: f64,
    pub embedding: Embedding,
}

/// JSON form of an [`EmbeddingTree`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub nodes: Vec<NodeRecord>,
    pub root: NodeId,
    pub c_max: f64,
    pub inversion_count: usize,
    /// Content hash of the inputs the tree was built from, for cache checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_hash: Option<String>,
}

impl EmbeddingTree {
    pub fn to_file(&self, input_hash: Option<String>) -> TreeFile {
        let nodes = self
            .nodes()
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                parent: n.parent,
                children: n.children.map(|(a, b)| vec![a, b]).unwrap_or_default(),
                members: self
                    .member_ids(n.id)
                    .into_iter()
                    .map(str::to_owned)
                    .collect(),
                score: n.score,
                raw_score: n.raw_score,
                embedding: n.embedding.clone(),
            })
            .collect();
        TreeFile {
            nodes,
            root: self.root(),
            c_max: self.c_max(),
            inversion_count: self.inversion_count(),
            input_hash,
        }
    }

    /// Rebuilds a tree from its JSON form, checking structural consistency.
    pub fn from_file(file: &TreeFile) -> Result<EmbeddingTree> {
        let bad = |msg: String| Error::parse("tree file", msg);
        let total = file.nodes.len();
        if total == 0 || total.is_multiple_of(2) {
            return Err(bad(format!("{total} nodes is not 2N-1 for any N >= 1")));
        }
        let n = total.div_ceil(2);
        let mut prompt_ids = Vec::with_capacity(n);
        let mut nodes = Vec::with_capacity(total);
        for (i, rec) in file.nodes.iter().enumerate() {
            if rec.id != NodeId(i) {
                return Err(bad(format!("node at position {i} has id {}", rec.id)));
            }
            let children = match rec.children.as_slice() {
                [] if i < n => None,
                [a, b] if i >= n && a.0 < i && b.0 < i && a != b => Some((*a, *b)),
                _ => return Err(bad(format!("node {i} has malformed children"))),
            };
            if i < n {
                match rec.members.as_slice() {
                    [id] => prompt_ids.push(id.clone()),
                    _ => return Err(bad(format!("leaf {i} must have exactly one member"))),
                }
            }
            nodes.push(TreeNode {
                id: rec.id,
                parent: None,
                children,
                size: 1,
                embedding: rec.embedding.clone(),
                score: rec.raw_score,
                raw_score: rec.raw_score,
            });
        }
        for i in n..total {
            let (a, b) = nodes[i].children.unwrap();
            for c in [a, b] {
                if nodes[c.0].parent.is_some() {
                    return Err(bad(format!("node {c} has two parents")));
                }
                nodes[c.0].parent = Some(NodeId(i));
            }
            nodes[i].size = nodes[a.0].size + nodes[b.0].size;
        }
        for (i, rec) in file.nodes.iter().enumerate() {
            if rec.parent != nodes[i].parent {
                return Err(bad(format!(
                    "node {i} parent does not match children lists"
                )));
            }
        }
        let tree = EmbeddingTree::assemble(nodes, prompt_ids)?;
        if tree.root() != file.root {
            return Err(bad(format!(
                "declared root {} is not the structural root",
                file.root
            )));
        }
        for (i, rec) in file.nodes.iter().enumerate() {
            if tree.member_ids(NodeId(i)).iter().ne(rec.members.iter()) {
                return Err(bad(format!(
                    "node {i} member list does not match its subtree"
                )));
            }
            if tree.node(NodeId(i)).score != rec.score {
                return Err(bad(format!("node {i} score is not the clamped raw score")));
            }
        }
        if tree.leaf_of.len() != n {
            return Err(bad("duplicate prompt ids among leaves".into()));
        }
        Ok(tree)
    }

    pub fn to_json(&self, input_hash: Option<String>) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file(input_hash))?)
    }

    pub fn from_json(text: &str) -> Result<(EmbeddingTree, Option<String>)> {
        let file: TreeFile = serde_json::from_str(text)?;
        let tree = EmbeddingTree::from_file(&file)?;
        Ok((tree, file.input_hash))
    }
}
