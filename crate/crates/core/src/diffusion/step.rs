use crate::error::Result;
use crate::rng::CounterRng;

use super::schedule::{NoiseSchedule, SamplerVariant};
use super::world::ToyWorld;

/// One reverse step `k` (1-based sampling order) under `condition`.
///
/// `noise` supplies `z` for the ancestral update and is left untouched by the
/// deterministic one.
pub fn denoise_step(
    x: &[f64],
    k: usize,
    condition: &[f64],
    schedule: &NoiseSchedule,
    world: &ToyWorld,
    noise: &mut CounterRng,
) -> Result<Vec<f64>> {
    let mu = world.target_mean(condition)?;
    step_with_mean(x, k, &mu, schedule, world, noise)
}

pub(crate) fn step_with_mean(
    x: &[f64],
    k: usize,
    mu: &[f64],
    schedule: &NoiseSchedule,
    world: &ToyWorld,
    noise: &mut CounterRng,
) -> Result<Vec<f64>> {
    let t = schedule.time_of_step(k)?;
    let ab = schedule.alpha_bars();
    let (x0, eps) = world.predict_with_mean(x, ab[t], mu)?;
    Ok(match schedule.variant() {
        SamplerVariant::Deterministic => {
            let (s, n) = (ab[t - 1].sqrt(), (1.0 - ab[t - 1]).sqrt());
            x0.iter().zip(&eps).map(|(h, e)| s * h + n * e).collect()
        }
        SamplerVariant::Ancestral => {
            let c = schedule.coefficients(k)?;
            let mut out: Vec<f64> = x
                .iter()
                .zip(&eps)
                .map(|(xi, e)| c.a * xi - c.b * e)
                .collect();
            if c.sigma > 0.0 {
                for v in &mut out {
                    *v += c.sigma * noise.gaussian();
                }
            }
            out
        }
    })
}
