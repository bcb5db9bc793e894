//! Step-to-node assignment and the deduplicated shared-step plan.
//!
//! At step `k` each prompt is conditioned on the node of its root path with
//! the smallest heterogeneity among those whose parent is at least as
//! heterogeneous as the threshold `φ(k)`. Prompts that land on the same node
//! share that step's denoiser evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hierarchy::{EmbeddingTree, NodeId};

/// How the threshold is spread over the steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiVariant {
    /// `τ·(1 − k/K)`: reaches 0 at the last step, `τ(1 − 1/K)` at the first.
    #[default]
    Main,
    /// `τ·(K − k)/(K − 1)`: evenly spaced from `τ` at step 1 down to 0.
    Appendix,
}

impl FromStr for PhiVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(PhiVariant::Main),
            "appendix" => Ok(PhiVariant::Appendix),
            other => Err(Error::usage(format!("unknown phi variant {other:?}"))),
        }
    }
}

impl fmt::Display for PhiVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhiVariant::Main => "main",
            PhiVariant::Appendix => "appendix",
        })
    }
}

/// Step count and specialization rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    steps: usize,
    tau: f64,
    phi: PhiVariant,
}

impl ScheduleParams {
    pub fn new(steps: usize, tau: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::usage("K must be >= 1"));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::usage(format!(
                "tau must be finite and >= 0, got {tau}"
            )));
        }
        Ok(ScheduleParams {
            steps,
            tau,
            phi: PhiVariant::Main,
        })
    }

    pub fn with_phi(mut self, phi: PhiVariant) -> Self {
        self.phi = phi;
        self
    }

    /// Total number of steps `K`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn phi_variant(&self) -> PhiVariant {
        self.phi
    }
}

/// Heterogeneity threshold at step `k` (1-based).
pub fn phi(k: usize, params: &ScheduleParams) -> Result<f64> {
    let big_k = params.steps;
    if k == 0 || k > big_k {
        return Err(Error::usage(format!("step {k} outside 1..={big_k}")));
    }
    Ok(match params.phi {
        PhiVariant::Main => params.tau * (1.0 - k as f64 / big_k as f64),
        // A single step is the last step.
        PhiVariant::Appendix if big_k == 1 => 0.0,
        PhiVariant::Appendix => params.tau * (big_k - k) as f64 / (big_k - 1) as f64,
    })
}

/// Selection along the path from `leaf` upward, given a threshold.
pub(crate) fn select_from_leaf(tree: &EmbeddingTree, leaf: NodeId, threshold: f64) -> NodeId {
    let mut best: Option<(NodeId, f64)> = None;
    let mut cur = Some(leaf);
    while let Some(c) = cur {
        let node = tree.node(c);
        // `<=` while walking upward resolves ties toward the shallower node.
        if tree.parent_score(c) >= threshold && best.is_none_or(|(_, s)| node.score <= s) {
            best = Some((c, node.score));
        }
        cur = node.parent;
    }
    best.expect("the root is always eligible").0
}

/// Node whose mean embedding conditions `prompt_id` at step `k`.
pub fn select_node(
    tree: &EmbeddingTree,
    prompt_id: &str,
    k: usize,
    params: &ScheduleParams,
) -> Result<NodeId> {
    let threshold = phi(k, params)?;
    Ok(select_from_leaf(tree, tree.leaf_of(prompt_id)?, threshold))
}

/// Where a node's input state comes from at a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inherit {
    /// Fresh initial noise (first step only).
    Fresh,
    /// The step `k − 1` output of this node (the node itself or an ancestor).
    From(NodeId),
}

impl Serialize for Inherit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Inherit::Fresh => s.serialize_str("FRESH"),
            Inherit::From(id) => id.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Inherit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Node(usize),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Node(n) => Ok(Inherit::From(NodeId(n))),
            Raw::Tag(t) if t == "FRESH" => Ok(Inherit::Fresh),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!(
                "bad inherit source {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub k: usize,
    /// Distinct nodes evaluated at this step, ascending.
    pub active: Vec<NodeId>,
    pub inherit: BTreeMap<NodeId, Inherit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAssignment {
    pub id: String,
    /// Node per step, `nodes[k - 1]` for step `k`.
    pub nodes: Vec<NodeId>,
}

/// Which tree drove node selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    #[default]
    Embeddings,
    RandomEncodings,
}

/// Compiled per-step assignment with deduplicated active sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharePlan {
    #[serde(rename = "K")]
    pub steps_total: usize,
    pub tau: f64,
    pub phi_variant: PhiVariant,
    #[serde(default)]
    pub selection: Selection,
    pub assignment: Vec<PromptAssignment>,
    pub steps: Vec<PlanStep>,
    pub total_evaluations: usize,
    pub baseline_evaluations: usize,
    pub savings_fraction: f64,
    #[serde(default)]
    pub max_depth_used: usize,
}

impl SharePlan {
    pub fn num_prompts(&self) -> usize {
        self.assignment.len()
    }

    /// Node serving prompt `prompt` (index) at step `k`.
    pub fn node_at(&self, prompt: usize, k: usize) -> NodeId {
        self.assignment[prompt].nodes[k - 1]
    }

    pub fn params(&self) -> Result<ScheduleParams> {
        Ok(ScheduleParams::new(self.steps_total, self.tau)?.with_phi(self.phi_variant))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<SharePlan> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Compiles the shared-step plan.
///
/// With `ablation`, nodes are selected on that tree (same prompt ids, in the
/// same order) instead of `tree`; callers execute such a plan against
/// `ablation.with_member_means(..)` so generation still uses true embeddings.
pub fn compile_plan(
    tree: &EmbeddingTree,
    params: &ScheduleParams,
    ablation: Option<&EmbeddingTree>,
) -> Result<SharePlan> {
    if let Some(abl) = ablation {
        if abl.prompt_ids() != tree.prompt_ids() {
            return Err(Error::usage(
                "ablation tree prompt ids differ from the embedding tree",
            ));
        }
    }
    let selector = ablation.unwrap_or(tree);
    let n = selector.num_prompts();
    let big_k = params.steps();

    let thresholds = (1..=big_k)
        .map(|k| phi(k, params))
        .collect::<Result<Vec<_>>>()?;
    let assignment: Vec<PromptAssignment> = selector
        .prompt_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| PromptAssignment {
            id: id.clone(),
            nodes: thresholds
                .iter()
                .map(|&t| select_from_leaf(selector, selector.leaf(i), t))
                .collect(),
        })
        .collect();

    let mut steps = Vec::with_capacity(big_k);
    let mut prev_active = vec![false; selector.len()];
    let mut cur_active = vec![false; selector.len()];
    let mut max_depth_used = 0;
    for k in 1..=big_k {
        let mut active: Vec<NodeId> = assignment.iter().map(|a| a.nodes[k - 1]).collect();
        active.sort_unstable();
        active.dedup();
        let mut inherit = BTreeMap::new();
        for &c in &active {
            cur_active[c.0] = true;
            max_depth_used = max_depth_used.max(selector.depth(c));
            let source = if k == 1 {
                Inherit::Fresh
            } else {
                let mut cur = Some(c);
                loop {
                    match cur {
                        Some(a) if prev_active[a.0] => break Inherit::From(a),
                        Some(a) => cur = selector.node(a).parent,
                        None => {
                            return Err(Error::domain(format!(
                                "node {c} at step {k} has no active ancestor at step {}",
                                k - 1
                            )))
                        }
                    }
                }
            };
            inherit.insert(c, source);
        }
        std::mem::swap(&mut prev_active, &mut cur_active);
        cur_active.iter_mut().for_each(|v| *v = false);
        steps.push(PlanStep { k, active, inherit });
    }

    let total_evaluations: usize = steps.iter().map(|s| s.active.len()).sum();
    let baseline_evaluations = big_k * n;
    Ok(SharePlan {
        steps_total: big_k,
        tau: params.tau(),
        phi_variant: params.phi_variant(),
        selection: if ablation.is_some() {
            Selection::RandomEncodings
        } else {
            Selection::Embeddings
        },
        assignment,
        steps,
        total_evaluations,
        baseline_evaluations,
        savings_fraction: savings_fraction(total_evaluations, baseline_evaluations),
        max_depth_used,
    })
}

pub(crate) fn savings_fraction(total: usize, baseline: usize) -> f64 {
    1.0 - total as f64 / baseline as f64
}

/// Summary of a plan's compute accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub per_step_active_counts: Vec<usize>,
    pub total: usize,
    pub baseline: usize,
    pub savings_fraction: f64,
    pub max_tree_depth_used: usize,
    /// Average number of denoiser evaluations attributable to one prompt.
    pub mean_steps_per_prompt: f64,
}

pub fn savings_report(plan: &SharePlan) -> SavingsReport {
    SavingsReport {
        per_step_active_counts: plan.steps.iter().map(|s| s.active.len()).collect(),
        total: plan.total_evaluations,
        baseline: plan.baseline_evaluations,
        savings_fraction: plan.savings_fraction,
        max_tree_depth_used: plan.max_depth_used,
        mean_steps_per_prompt: plan.total_evaluations as f64 / plan.num_prompts() as f64,
    }
}

/// Checks that `plan` refers to `tree`: same prompts, assignments on each
/// prompt's root path, deduplicated active sets and well-formed inheritance.
pub fn validate_plan(plan: &SharePlan, tree: &EmbeddingTree) -> Result<()> {
    let bad = |msg: String| Error::usage(format!("plan does not match tree: {msg}"));
    let big_k = plan.steps_total;
    if big_k == 0 || plan.steps.len() != big_k {
        return Err(bad(format!(
            "{} step entries for K = {big_k}",
            plan.steps.len()
        )));
    }
    if plan.assignment.len() != tree.num_prompts() {
        return Err(bad(format!(
            "{} prompts in plan, {} in tree",
            plan.assignment.len(),
            tree.num_prompts()
        )));
    }
    for (i, a) in plan.assignment.iter().enumerate() {
        if a.id != tree.prompt_ids()[i] {
            return Err(bad(format!(
                "prompt {i} is {:?} in plan, {:?} in tree",
                a.id,
                tree.prompt_ids()[i]
            )));
        }
        if a.nodes.len() != big_k {
            return Err(bad(format!(
                "prompt {:?} has {} steps",
                a.id,
                a.nodes.len()
            )));
        }
        for &c in &a.nodes {
            if c.0 >= tree.len() || !tree.is_ancestor_or_self(c, tree.leaf(i)) {
                return Err(bad(format!(
                    "node {c} is not on the root path of {:?}",
                    a.id
                )));
            }
        }
    }
    let mut prev: Vec<NodeId> = Vec::new();
    let mut total = 0;
    for (idx, step) in plan.steps.iter().enumerate() {
        let k = idx + 1;
        if step.k != k {
            return Err(bad(format!("step entry {idx} is labelled k = {}", step.k)));
        }
        let mut expected: Vec<NodeId> = plan.assignment.iter().map(|a| a.nodes[idx]).collect();
        expected.sort_unstable();
        expected.dedup();
        if step.active != expected {
            return Err(bad(format!(
                "active set at step {k} is not the distinct assignments"
            )));
        }
        if step.inherit.len() != step.active.len() {
            return Err(bad(format!(
                "inherit map at step {k} does not cover the active set"
            )));
        }
        for &c in &step.active {
            match step.inherit.get(&c) {
                Some(Inherit::Fresh) if k == 1 => {}
                Some(Inherit::From(src))
                    if k > 1
                        && prev.binary_search(src).is_ok()
                        && tree.is_ancestor_or_self(*src, c) => {}
                other => {
                    return Err(bad(format!(
                        "bad inherit source {other:?} for node {c} at step {k}"
                    )))
                }
            }
        }
        total += step.active.len();
        prev = step.active.clone();
    }
    if total != plan.total_evaluations {
        return Err(bad(format!(
            "total_evaluations {} but active sets sum to {total}",
            plan.total_evaluations
        )));
    }
    Ok(())
}
