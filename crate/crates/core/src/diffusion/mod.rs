//! Toy conditional diffusion with an analytic denoiser.
//!
//! Data for a condition `y` is Gaussian, `N(A·y, s²I)`, so the optimal noise
//! predictor has a closed form and every property the planner relies on can be
//! checked exactly.

mod executor;
mod schedule;
mod step;
mod world;

pub use executor::{execute_plan, run_standard, ExecOptions, GenerationOutput, PromptSample};
pub use schedule::{
    make_schedule, noise_forward, NoiseSchedule, SamplerVariant, ScheduleCurve, StepCoefficients,
    LINEAR_BETA_END, LINEAR_BETA_START, MAX_BETA,
};
pub use step::denoise_step;
pub use world::{
    analytic_epsilon, posterior_mean, ConditionMapSpec, ScheduleConfig, ToyWorld, WorldConfig,
};
