use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::PromptSet;
use crate::error::{Error, Result};
use crate::hierarchy::{EmbeddingTree, NodeId};
use crate::planner::{validate_plan, Inherit, SharePlan};
use crate::rng::{domain, StreamKey};

use super::schedule::NoiseSchedule;
use super::step::step_with_mean;
use super::world::ToyWorld;

/// Execution knobs that do not affect results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl ExecOptions {
    pub fn with_threads(threads: usize) -> Self {
        ExecOptions {
            threads: Some(threads),
        }
    }

    fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::config(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

/// Final sample of one prompt and the `(node, k)` evaluations it consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSample {
    pub id: String,
    pub sample: Vec<f64>,
    pub trace: Vec<(NodeId, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutput {
    pub samples: Vec<PromptSample>,
    pub seed: u64,
    /// Denoiser invocations actually performed.
    pub evaluations: usize,
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    id: String,
    sample: Vec<f32>,
    trace: Vec<(NodeId, usize)>,
}

impl GenerationOutput {
    /// One JSON object per prompt, samples rounded to `f32`.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.samples {
            let line = SampleLine {
                id: s.id.clone(),
                sample: s.sample.iter().map(|&v| v as f32).collect(),
                trace: s.trace.clone(),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn get(&self, id: &str) -> Option<&PromptSample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

pub(crate) fn initial_noise(master_seed: u64, node: NodeId, dim: usize) -> Vec<f64> {
    StreamKey::path(master_seed, &[domain::INITIAL_NOISE, node.0 as u64])
        .stream()
        .gaussian_vec(dim)
}

fn step_key(master_seed: u64, node: NodeId, k: usize) -> StreamKey {
    StreamKey::path(master_seed, &[domain::STEP_NOISE, node.0 as u64, k as u64])
}

fn check_dims(world: &ToyWorld, embed_dim: usize) -> Result<()> {
    if world.embed_dim() != embed_dim {
        return Err(Error::config(format!(
            "embeddings have dimension {embed_dim}, world expects {}",
            world.embed_dim()
        )));
    }
    Ok(())
}

/// Runs a share plan: each active `(node, k)` is denoised once and its state
/// is handed to every node that inherits from it at step `k + 1`.
///
/// `tree` supplies the conditioning embeddings (node means); only the states
/// of the previous step are kept.
pub fn execute_plan(
    plan: &SharePlan,
    tree: &EmbeddingTree,
    world: &ToyWorld,
    schedule: &NoiseSchedule,
    master_seed: u64,
    options: ExecOptions,
) -> Result<GenerationOutput> {
    validate_plan(plan, tree)?;
    if plan.steps_total != schedule.steps() {
        return Err(Error::usage(format!(
            "plan has K = {}, schedule has K = {}",
            plan.steps_total,
            schedule.steps()
        )));
    }
    check_dims(world, tree.node(tree.root()).embedding.dim())?;

    let calls = AtomicUsize::new(0);
    let dim = world.data_dim();
    let mut means: HashMap<NodeId, Vec<f64>> = HashMap::new();

    let last = options.run(|| -> Result<HashMap<NodeId, Vec<f64>>> {
        let mut prev: HashMap<NodeId, Vec<f64>> = HashMap::new();
        for step in &plan.steps {
            for &c in &step.active {
                if let Entry::Vacant(slot) = means.entry(c) {
                    slot.insert(world.target_mean(tree.node(c).embedding.values())?);
                }
            }
            let means = &means;
            let prev_ref = &prev;
            let next = step
                .active
                .par_iter()
                .map(|&c| {
                    let fresh;
                    let input: &[f64] = match step.inherit[&c] {
                        Inherit::Fresh => {
                            fresh = initial_noise(master_seed, c, dim);
                            &fresh
                        }
                        Inherit::From(src) => &prev_ref[&src],
                    };
                    let mut noise = step_key(master_seed, c, step.k).stream();
                    calls.fetch_add(1, Ordering::Relaxed);
                    let out =
                        step_with_mean(input, step.k, &means[&c], schedule, world, &mut noise)?;
                    Ok((c, out))
                })
                .collect::<Result<HashMap<_, _>>>()?;
            prev = next;
        }
        Ok(prev)
    })??;

    let evaluations = calls.into_inner();
    if evaluations != plan.total_evaluations {
        return Err(Error::domain(format!(
            "performed {evaluations} evaluations, plan accounts for {}",
            plan.total_evaluations
        )));
    }
    let samples = plan
        .assignment
        .iter()
        .map(|a| PromptSample {
            id: a.id.clone(),
            sample: last[a.nodes.last().expect("K >= 1")].clone(),
            trace: a
                .nodes
                .iter()
                .enumerate()
                .map(|(i, &c)| (c, i + 1))
                .collect(),
        })
        .collect();
    Ok(GenerationOutput {
        samples,
        seed: master_seed,
        evaluations,
    })
}

/// Independent per-prompt sampling, each chain keyed by the prompt's leaf
/// node (its index). Runs the first `steps` steps of `schedule`, or all of
/// them for `None`, and returns the state reached.
pub fn run_standard(
    prompts: &PromptSet,
    world: &ToyWorld,
    schedule: &NoiseSchedule,
    master_seed: u64,
    steps: Option<usize>,
    options: ExecOptions,
) -> Result<GenerationOutput> {
    let budget = steps.unwrap_or(schedule.steps());
    if budget == 0 || budget > schedule.steps() {
        return Err(Error::usage(format!(
            "step budget {budget} outside 1..={}",
            schedule.steps()
        )));
    }
    check_dims(world, prompts.dim())?;
    let calls = AtomicUsize::new(0);
    let samples = options.run(|| {
        prompts
            .items()
            .par_iter()
            .enumerate()
            .map(|(i, rec)| {
                let node = NodeId(i);
                let mu = world.target_mean(rec.embedding.values())?;
                let mut x = initial_noise(master_seed, node, world.data_dim());
                for k in 1..=budget {
                    let mut noise = step_key(master_seed, node, k).stream();
                    calls.fetch_add(1, Ordering::Relaxed);
                    x = step_with_mean(&x, k, &mu, schedule, world, &mut noise)?;
                }
                Ok(PromptSample {
                    id: rec.id.clone(),
                    sample: x,
                    trace: (1..=budget).map(|k| (node, k)).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(GenerationOutput {
        samples,
        seed: master_seed,
        evaluations: calls.into_inner(),
    })
}
