use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest per-step β; keeps `1/√(1−β)` finite at the noisy end.
pub const MAX_BETA: f64 = 0.999;
pub const LINEAR_BETA_START: f64 = 1e-4;
pub const LINEAR_BETA_END: f64 = 0.02;
const COSINE_OFFSET: f64 = 0.008;
/// Step count the linear β range is calibrated for.
const LINEAR_REFERENCE_STEPS: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleCurve {
    #[default]
    Cosine,
    #[serde(alias = "linear_beta")]
    LinearBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerVariant {
    /// Stochastic update `a·x − b·ε̂ + σ·z`.
    Ancestral,
    /// Noise-free update through the clean-sample estimate (σ = 0).
    #[default]
    Deterministic,
}

impl FromStr for ScheduleCurve {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(ScheduleCurve::Cosine),
            "linear-beta" | "linear_beta" => Ok(ScheduleCurve::LinearBeta),
            other => Err(Error::usage(format!("unknown schedule curve {other:?}"))),
        }
    }
}

impl FromStr for SamplerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" => Ok(SamplerVariant::Deterministic),
            "ancestral" => Ok(SamplerVariant::Ancestral),
            other => Err(Error::usage(format!("unknown sampler variant {other:?}"))),
        }
    }
}

impl fmt::Display for ScheduleCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleCurve::Cosine => "cosine",
            ScheduleCurve::LinearBeta => "linear-beta",
        })
    }
}

impl fmt::Display for SamplerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerVariant::Ancestral => "ancestral",
            SamplerVariant::Deterministic => "deterministic",
        })
    }
}

/// Coefficients of the ancestral update for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

/// Discrete noise levels `ᾱ_0 = 1 > ᾱ_1 > ... > ᾱ_K ≈ 0`.
///
/// Index `t` is diffusion time (0 = clean). Sampling step `k = 1..=K` moves
/// from `t = K + 1 − k` to `t = K − k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    curve: ScheduleCurve,
    variant: SamplerVariant,
    alpha_bar: Vec<f64>,
    beta: Vec<f64>,
    coefficients: Vec<StepCoefficients>,
}

fn cosine_level(u: f64) -> f64 {
    let c = libm::cos((u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2);
    c * c
}

pub fn make_schedule(
    steps: usize,
    variant: SamplerVariant,
    curve: ScheduleCurve,
) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::usage("schedule needs K >= 1"));
    }
    let k_f = steps as f64;
    // beta[t] for t = 1..=K; beta[0] unused.
    let mut beta = vec![0.0; steps + 1];
    match curve {
        ScheduleCurve::Cosine => {
            for (t, b) in beta.iter_mut().enumerate().skip(1) {
                let ratio = cosine_level(t as f64 / k_f) / cosine_level((t - 1) as f64 / k_f);
                *b = (1.0 - ratio).min(MAX_BETA);
            }
        }
        ScheduleCurve::LinearBeta => {
            let scale = LINEAR_REFERENCE_STEPS / k_f;
            let (lo, hi) = (scale * LINEAR_BETA_START, scale * LINEAR_BETA_END);
            for (t, b) in beta.iter_mut().enumerate().skip(1) {
                let frac = if steps == 1 {
                    0.0
                } else {
                    (t - 1) as f64 / (k_f - 1.0)
                };
                *b = (lo + frac * (hi - lo)).min(MAX_BETA);
            }
        }
    }
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    alpha_bar.push(1.0);
    for t in 1..=steps {
        alpha_bar.push(alpha_bar[t - 1] * (1.0 - beta[t]));
    }

    let coefficients = (0..=steps)
        .map(|t| {
            if t == 0 {
                return StepCoefficients {
                    a: 1.0,
                    b: 0.0,
                    sigma: 0.0,
                };
            }
            let (bt, ab, ab_prev) = (beta[t], alpha_bar[t], alpha_bar[t - 1]);
            let a = 1.0 / (1.0 - bt).sqrt();
            let b = bt / ((1.0 - bt).sqrt() * (1.0 - ab).sqrt());
            let sigma = match variant {
                SamplerVariant::Deterministic => 0.0,
                SamplerVariant::Ancestral => (bt * (1.0 - ab_prev) / (1.0 - ab)).sqrt(),
            };
            StepCoefficients { a, b, sigma }
        })
        .collect();

    let schedule = NoiseSchedule {
        steps,
        curve,
        variant,
        alpha_bar,
        beta,
        coefficients,
    };
    debug_assert!(schedule.alpha_bar.windows(2).all(|w| w[1] < w[0]));
    Ok(schedule)
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn curve(&self) -> ScheduleCurve {
        self.curve
    }

    pub fn variant(&self) -> SamplerVariant {
        self.variant
    }

    /// `ᾱ_t` for `t = 0..=K`.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `β_t` for `t = 0..=K` (`β_0 = 0`).
    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    /// Diffusion-time index of the input to sampling step `k`.
    pub fn time_of_step(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.steps {
            return Err(Error::usage(format!("step {k} outside 1..={}", self.steps)));
        }
        Ok(self.steps + 1 - k)
    }

    /// Ancestral coefficients of sampling step `k`.
    pub fn coefficients(&self, k: usize) -> Result<StepCoefficients> {
        Ok(self.coefficients[self.time_of_step(k)?])
    }

    /// Same schedule with a different sampler variant.
    pub fn with_variant(&self, variant: SamplerVariant) -> NoiseSchedule {
        make_schedule(self.steps, variant, self.curve).expect("valid schedule")
    }
}

/// Forward noising `√ᾱ·x0 + √(1−ᾱ)·ε`.
pub fn noise_forward(x0: &[f64], alpha_bar: f64, epsilon: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x0.len(), epsilon.len());
    let (s, n) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    x0.iter().zip(epsilon).map(|(x, e)| s * x + n * e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_monotonicity() {
        for curve in [ScheduleCurve::Cosine, ScheduleCurve::LinearBeta] {
            for k in [1, 2, 10, 40, 1000] {
                let s = make_schedule(k, SamplerVariant::Ancestral, curve).unwrap();
                let ab = s.alpha_bars();
                assert_eq!(ab.len(), k + 1);
                assert_eq!(ab[0], 1.0);
                assert!(ab.windows(2).all(|w| w[1] < w[0]), "{curve} K={k}");
                assert!(ab[k] > 0.0);
                for step in 1..=k {
                    let c = s.coefficients(step).unwrap();
                    assert!(c.a.is_finite() && c.b.is_finite() && c.sigma.is_finite());
                }
            }
        }
    }

    #[test]
    fn linear_beta_thousand_steps_reaches_noise() {
        // Independent recomputation of the cumulative product.
        let mut prod = 1.0f64;
        for i in 0..1000 {
            prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0);
        }
        let s = make_schedule(
            1000,
            SamplerVariant::Deterministic,
            ScheduleCurve::LinearBeta,
        )
        .unwrap();
        assert!((s.alpha_bars()[1000] - prod).abs() < 1e-15);
        assert!(s.alpha_bars()[1000] < 5e-5);
    }

    #[test]
    fn cosine_schedule_is_near_zero_at_the_end() {
        let s = make_schedule(40, SamplerVariant::Deterministic, ScheduleCurve::Cosine).unwrap();
        assert!(s.alpha_bars()[40] < 1e-5);
        let direct = cosine_level(0.5) / cosine_level(0.0);
        assert!((s.alpha_bars()[20] - direct).abs() < 1e-12);
    }

    #[test]
    fn deterministic_has_zero_sigma() {
        let s = make_schedule(25, SamplerVariant::Deterministic, ScheduleCurve::Cosine).unwrap();
        assert!((1..=25).all(|k| s.coefficients(k).unwrap().sigma == 0.0));
        let a = s.with_variant(SamplerVariant::Ancestral);
        assert!(a.coefficients(1).unwrap().sigma > 0.0);
        // The last step lands on t = 0 where the posterior is a point mass.
        assert_eq!(a.coefficients(25).unwrap().sigma, 0.0);
    }

    #[test]
    fn rejects_zero_steps() {
        assert!(make_schedule(0, SamplerVariant::Ancestral, ScheduleCurve::Cosine).is_err());
        let s = make_schedule(3, SamplerVariant::Ancestral, ScheduleCurve::Cosine).unwrap();
        assert!(s.coefficients(0).is_err());
        assert!(s.coefficients(4).is_err());
    }

    #[test]
    fn forward_noising_examples() {
        assert_eq!(
            noise_forward(&[1.5, -2.0], 1.0, &[9.0, 9.0]),
            vec![1.5, -2.0]
        );
        assert_eq!(
            noise_forward(&[1.5, -2.0], 0.0, &[9.0, 3.0]),
            vec![9.0, 3.0]
        );
        let x = noise_forward(&[4.0, 0.0], 0.25, &[0.0, 2.0]);
        assert_eq!(x[0], 2.0);
        assert!((x[1] - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn forward_noising_inverts_with_true_noise() {
        let x0 = [0.3, -1.7, 2.5, 1e-3];
        let eps = [1.1, 0.2, -0.7, 0.05];
        for ab in [0.999, 0.5, 0.01] {
            let xt = noise_forward(&x0, ab, &eps);
            for i in 0..x0.len() {
                let back = (xt[i] - (1.0f64 - ab).sqrt() * eps[i]) / ab.sqrt();
                assert!((back - x0[i]).abs() <= 1e-10 * x0[i].abs().max(1.0));
            }
        }
    }
}
