//! Hierarchical shared-step diffusion.
//!
//! Prompts are clustered into a binary tree by embedding similarity. Early
//! denoising steps run once per cluster, conditioned on the cluster's mean
//! embedding, and branch into sub-clusters as the heterogeneity threshold
//! falls, so later steps specialize to each prompt. A toy Gaussian diffusion
//! model with an exact denoiser executes the resulting plans.
//!
//! ```
//! use shdf_core::{build_tree, compile_plan, generate_synthetic, ScheduleParams, SyntheticSpec};
//!
//! let prompts = generate_synthetic(&SyntheticSpec {
//!     clusters: 4,
//!     per_cluster: 4,
//!     dimension: 16,
//!     jitter: 0.02,
//!     seed: 1,
//! })?;
//! let tree = build_tree(&prompts)?;
//! let plan = compile_plan(&tree, &ScheduleParams::new(40, 1.0)?, None)?;
//! assert!(plan.savings_fraction > 0.0);
//! # Ok::<(), shdf_core::Error>(())
//! ```

pub mod diffusion;
pub mod embedding;
mod error;
pub mod hierarchy;
pub mod io;
pub mod metrics;
pub mod planner;
pub mod rng;
pub mod synthetic;

pub use diffusion::{
    analytic_epsilon, denoise_step, execute_plan, make_schedule, noise_forward, run_standard,
    ConditionMapSpec, ExecOptions, GenerationOutput, NoiseSchedule, PromptSample, SamplerVariant,
    ScheduleCurve, ToyWorld, WorldConfig,
};
pub use embedding::{
    cosine_distance, cosine_similarity, mean_embedding, Embedding, PromptRecord, PromptSet,
};
pub use error::{Error, Result};
pub use hierarchy::{build_tree, reference_build_tree, EmbeddingTree, NodeId, TreeNode};
pub use io::{load_prompt_set, save_prompt_set, PromptFormat};
pub use metrics::{
    diversity_pairwise_cosine, quality_mse, run_metrics, standard_run_metrics, sweep_csv,
    sweep_tau, RunMetrics, SweepConfig,
};
pub use planner::{
    compile_plan, phi, savings_report, select_node, validate_plan, Inherit, PhiVariant,
    SavingsReport, ScheduleParams, SharePlan,
};
pub use synthetic::{generate_synthetic, randomize_encodings, SyntheticSpec};
