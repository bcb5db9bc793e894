//! Quality, diversity and savings metrics, and τ sweeps.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diffusion::{execute_plan, ExecOptions, GenerationOutput, NoiseSchedule, ToyWorld};
use crate::embedding::{cosine_from_parts, dot, PromptSet};
use crate::error::{Error, Result};
use crate::hierarchy::EmbeddingTree;
use crate::planner::{
    compile_plan, savings_fraction, savings_report, PhiVariant, ScheduleParams, SharePlan,
};
use crate::rng::{domain, StreamKey};

pub const DEFAULT_SAMPLE_CAP: usize = 100;

/// CSV header of [`sweep_csv`].
pub const SWEEP_CSV_HEADER: &str = "tau,K,N,evaluations,baseline,savings,quality,diversity";

/// Per-prompt residuals `x − μ(y)`, matched by prompt id.
fn residuals(
    outputs: &GenerationOutput,
    world: &ToyWorld,
    prompts: &PromptSet,
) -> Result<Vec<Vec<f64>>> {
    prompts
        .items()
        .iter()
        .map(|rec| {
            let sample = outputs
                .get(&rec.id)
                .ok_or_else(|| Error::usage(format!("no output for prompt {:?}", rec.id)))?;
            let mu = world.target_mean(rec.embedding.values())?;
            if sample.sample.len() != mu.len() {
                return Err(Error::usage(format!(
                    "output for {:?} has the wrong dimension",
                    rec.id
                )));
            }
            Ok(sample.sample.iter().zip(&mu).map(|(x, m)| x - m).collect())
        })
        .collect()
}

/// Squared distance from each prompt's final sample to its target mean.
pub fn per_prompt_squared_error(
    outputs: &GenerationOutput,
    world: &ToyWorld,
    prompts: &PromptSet,
) -> Result<Vec<f64>> {
    Ok(residuals(outputs, world, prompts)?
        .iter()
        .map(|r| dot(r, r))
        .collect())
}

/// Mean over prompts of `‖x − A·y‖²`.
pub fn quality_mse(
    outputs: &GenerationOutput,
    world: &ToyWorld,
    prompts: &PromptSet,
) -> Result<f64> {
    let errs = per_prompt_squared_error(outputs, world, prompts)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// 2-Wasserstein distance between a Gaussian fitted to the pooled residuals
/// `x − μ(y)` and the target noise `N(0, s²I)`.
pub fn wasserstein_to_target(
    outputs: &GenerationOutput,
    world: &ToyWorld,
    prompts: &PromptSet,
) -> Result<f64> {
    let res = residuals(outputs, world, prompts)?;
    if res.len() < 2 {
        return Err(Error::usage(
            "Wasserstein distance needs at least 2 samples",
        ));
    }
    let d = world.data_dim();
    let n = res.len() as f64;
    let data = DMatrix::from_fn(res.len(), d, |i, j| res[i][j]);
    let mean: DVector<f64> = data.row_mean().transpose();
    let centered = DMatrix::from_fn(res.len(), d, |i, j| data[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / n;
    let eig = nalgebra::SymmetricEigen::new(cov.clone());
    let root_trace: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let s = world.target_std();
    let w2 = mean.norm_squared() + cov.trace() + d as f64 * s * s - 2.0 * s * root_trace;
    Ok(w2.max(0.0).sqrt())
}

/// Mean cosine similarity over all unordered pairs of up to `cap` final
/// samples, drawn with a stream keyed by `seed`. Zero samples are skipped.
pub fn diversity_pairwise_cosine(outputs: &GenerationOutput, cap: usize, seed: u64) -> Result<f64> {
    let usable: Vec<&[f64]> = outputs
        .samples
        .iter()
        .filter(|s| {
            let zero = s.sample.iter().all(|&v| v == 0.0);
            if zero {
                log::warn!("excluding all-zero sample {:?} from diversity", s.id);
            }
            !zero
        })
        .map(|s| s.sample.as_slice())
        .collect();
    if usable.len() < 2 || cap < 2 {
        return Err(Error::usage(format!(
            "diversity needs at least 2 nonzero samples, have {}",
            usable.len()
        )));
    }
    let chosen: Vec<&[f64]> = if usable.len() > cap {
        let mut rng = StreamKey::path(seed, &[domain::DIVERSITY_SUBSAMPLE]).stream();
        let mut idx = rand::seq::index::sample(&mut rng, usable.len(), cap).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| usable[i]).collect()
    } else {
        usable
    };
    let norms: Vec<f64> = chosen.iter().map(|v| dot(v, v)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..chosen.len() {
        for j in i + 1..chosen.len() {
            total += cosine_from_parts(dot(chosen[i], chosen[j]), norms[i], norms[j])?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Metrics that need two or more samples are `None` for smaller runs.
fn optional(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Usage(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Metrics of one plan execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub tau: f64,
    #[serde(rename = "K")]
    pub steps: usize,
    #[serde(rename = "N")]
    pub prompts: usize,
    pub evaluations_total: usize,
    pub baseline: usize,
    pub savings_fraction: f64,
    /// Average denoiser evaluations per prompt.
    pub mean_steps_per_prompt: f64,
    pub mean_squared_error_to_target: f64,
    /// `None` when fewer than two samples are usable.
    pub wasserstein_to_target: Option<f64>,
    pub diversity_mean_pairwise_cosine: Option<f64>,
}

impl RunMetrics {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn csv_row(&self) -> String {
        let diversity = self
            .diversity_mean_pairwise_cosine
            .map(|d| d.to_string())
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.tau,
            self.steps,
            self.prompts,
            self.evaluations_total,
            self.baseline,
            self.savings_fraction,
            self.mean_squared_error_to_target,
            diversity
        )
    }
}

/// Collects the metrics of an executed plan. Savings come from the plan.
pub fn run_metrics(
    plan: &SharePlan,
    outputs: &GenerationOutput,
    world: &ToyWorld,
    prompts: &PromptSet,
    seed: u64,
) -> Result<RunMetrics> {
    let report = savings_report(plan);
    Ok(RunMetrics {
        tau: plan.tau,
        steps: plan.steps_total,
        prompts: plan.num_prompts(),
        evaluations_total: report.total,
        baseline: report.baseline,
        savings_fraction: report.savings_fraction,
        mean_steps_per_prompt: report.mean_steps_per_prompt,
        mean_squared_error_to_target: quality_mse(outputs, world, prompts)?,
        wasserstein_to_target: optional(wasserstein_to_target(outputs, world, prompts))?,
        diversity_mean_pairwise_cosine: optional(diversity_pairwise_cosine(
            outputs,
            DEFAULT_SAMPLE_CAP,
            seed,
        ))?,
    })
}

/// Metrics of an independent per-prompt run of `steps` steps (no sharing).
pub fn standard_run_metrics(
    outputs: &GenerationOutput,
    world: &ToyWorld,
    prompts: &PromptSet,
    steps: usize,
    seed: u64,
) -> Result<RunMetrics> {
    let n = prompts.len();
    Ok(RunMetrics {
        tau: 0.0,
        steps,
        prompts: n,
        evaluations_total: outputs.evaluations,
        baseline: steps * n,
        savings_fraction: savings_fraction(outputs.evaluations, steps * n),
        mean_steps_per_prompt: outputs.evaluations as f64 / n as f64,
        mean_squared_error_to_target: quality_mse(outputs, world, prompts)?,
        wasserstein_to_target: optional(wasserstein_to_target(outputs, world, prompts))?,
        diversity_mean_pairwise_cosine: optional(diversity_pairwise_cosine(
            outputs,
            DEFAULT_SAMPLE_CAP,
            seed,
        ))?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub taus: Vec<f64>,
    pub phi: PhiVariant,
    pub master_seed: u64,
    pub exec: ExecOptions,
}

/// Plans and executes once per τ on a fixed tree with a shared seed.
///
/// `tree` must be built from `prompts` (or be an ablation tree carrying the
/// true member means, see [`EmbeddingTree::with_member_means`]).
pub fn sweep_tau(
    prompts: &PromptSet,
    tree: &EmbeddingTree,
    world: &ToyWorld,
    schedule: &NoiseSchedule,
    config: &SweepConfig,
) -> Result<Vec<RunMetrics>> {
    if config.taus.is_empty() {
        return Err(Error::usage("sweep needs at least one tau value"));
    }
    config
        .taus
        .iter()
        .map(|&tau| {
            let params = ScheduleParams::new(schedule.steps(), tau)?.with_phi(config.phi);
            let plan = compile_plan(tree, &params, None)?;
            let out = execute_plan(
                &plan,
                tree,
                world,
                schedule,
                config.master_seed,
                config.exec,
            )?;
            run_metrics(&plan, &out, world, prompts, config.master_seed)
        })
        .collect()
}

pub fn sweep_csv(rows: &[RunMetrics]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}
