use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::embedding::dot;
use crate::error::{Error, Result};
use crate::rng::{domain, StreamKey};

use super::schedule::{make_schedule, NoiseSchedule, SamplerVariant, ScheduleCurve};

/// How the condition map is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConditionMapSpec {
    /// `A = I`; requires data dimension = embedding dimension.
    #[default]
    Identity,
    /// Seeded random matrix with unit-norm rows.
    Random { seed: u64 },
}

impl Serialize for ConditionMapSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Seeded {
            seed: u64,
        }
        match self {
            ConditionMapSpec::Identity => s.serialize_str("identity"),
            ConditionMapSpec::Random { seed } => Seeded { seed: *seed }.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ConditionMapSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Seeded { seed: u64 },
        }
        match Raw::deserialize(d)? {
            Raw::Name(n) if n == "identity" => Ok(ConditionMapSpec::Identity),
            Raw::Name(n) => Err(serde::de::Error::custom(format!(
                "unknown condition map {n:?}"
            ))),
            Raw::Seeded { seed } => Ok(ConditionMapSpec::Random { seed }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(rename = "K")]
    pub steps: usize,
    #[serde(default)]
    pub curve: ScheduleCurve,
    #[serde(default)]
    pub variant: SamplerVariant,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 40,
            curve: ScheduleCurve::Cosine,
            variant: SamplerVariant::Deterministic,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_schedule(self.steps, self.variant, self.curve)
    }
}

/// Serialized world description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub data_dimension: usize,
    pub target_std: f64,
    #[serde(default)]
    pub condition_map: ConditionMapSpec,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub master_seed: u64,
}

impl WorldConfig {
    pub fn from_json(text: &str) -> Result<WorldConfig> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("world config: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Identity map with the given dimension and target spread.
    pub fn identity(dimension: usize, target_std: f64) -> WorldConfig {
        WorldConfig {
            data_dimension: dimension,
            target_std,
            condition_map: ConditionMapSpec::Identity,
            schedule: ScheduleConfig::default(),
            master_seed: 0,
        }
    }

    /// Instantiates the world for embeddings of dimension `embedding_dim`.
    pub fn world(&self, embedding_dim: usize) -> Result<ToyWorld> {
        ToyWorld::new(
            self.data_dimension,
            embedding_dim,
            self.target_std,
            self.condition_map,
        )
    }
}

/// Conditional Gaussian data distribution `x0 | y ~ N(A·y, s²I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorld {
    data_dim: usize,
    embed_dim: usize,
    target_std: f64,
    /// Rows of `A`; `None` for the identity.
    rows: Option<Vec<Vec<f64>>>,
}

impl ToyWorld {
    pub fn new(
        data_dim: usize,
        embed_dim: usize,
        target_std: f64,
        map: ConditionMapSpec,
    ) -> Result<ToyWorld> {
        if data_dim == 0 || embed_dim == 0 {
            return Err(Error::config("world dimensions must be positive"));
        }
        if !(target_std > 0.0 && target_std.is_finite()) {
            return Err(Error::config(format!(
                "target_std must be finite and > 0, got {target_std}"
            )));
        }
        let rows = match map {
            ConditionMapSpec::Identity if data_dim == embed_dim => None,
            ConditionMapSpec::Identity => {
                return Err(Error::config(format!(
                    "identity condition map needs data_dimension = embedding dimension, got {data_dim} and {embed_dim}"
                )))
            }
            ConditionMapSpec::Random { seed } => Some(
                (0..data_dim)
                    .map(|i| {
                        let mut rng = StreamKey::path(seed, &[domain::CONDITION_MAP, i as u64]).stream();
                        let row = rng.gaussian_vec(embed_dim);
                        let norm = dot(&row, &row).sqrt();
                        row.into_iter().map(|v| v / norm).collect()
                    })
                    .collect(),
            ),
        };
        Ok(ToyWorld {
            data_dim,
            embed_dim,
            target_std,
            rows,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn target_std(&self) -> f64 {
        self.target_std
    }

    /// Target mean `μ(y) = A·y`.
    pub fn target_mean(&self, condition: &[f64]) -> Result<Vec<f64>> {
        if condition.len() != self.embed_dim {
            return Err(Error::usage(format!(
                "condition has dimension {}, world expects {}",
                condition.len(),
                self.embed_dim
            )));
        }
        Ok(match &self.rows {
            None => condition.to_vec(),
            Some(rows) => rows.iter().map(|r| dot(r, condition)).collect(),
        })
    }

    /// Posterior mean `E[x0 | x_t]` and the implied noise estimate.
    pub(crate) fn predict_with_mean(
        &self,
        x: &[f64],
        alpha_bar: f64,
        mu: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
            return Err(Error::usage(format!(
                "alpha_bar must lie in (0, 1), got {alpha_bar}"
            )));
        }
        if x.len() != self.data_dim {
            return Err(Error::usage(format!(
                "state has dimension {}, world expects {}",
                x.len(),
                self.data_dim
            )));
        }
        let s2 = self.target_std * self.target_std;
        let root = alpha_bar.sqrt();
        let gain = root * s2 / (alpha_bar * s2 + 1.0 - alpha_bar);
        let noise_scale = (1.0 - alpha_bar).sqrt();
        let x0: Vec<f64> = x
            .iter()
            .zip(mu)
            .map(|(xi, m)| m + gain * (xi - root * m))
            .collect();
        let eps = x
            .iter()
            .zip(&x0)
            .map(|(xi, h)| (xi - root * h) / noise_scale)
            .collect();
        Ok((x0, eps))
    }
}

/// Optimal noise prediction `E[ε | x_t]` for the Gaussian target of `condition`.
pub fn analytic_epsilon(
    world: &ToyWorld,
    x: &[f64],
    alpha_bar: f64,
    condition: &[f64],
) -> Result<Vec<f64>> {
    let mu = world.target_mean(condition)?;
    Ok(world.predict_with_mean(x, alpha_bar, &mu)?.1)
}

/// Posterior mean `E[x0 | x_t]` for the Gaussian target of `condition`.
pub fn posterior_mean(
    world: &ToyWorld,
    x: &[f64],
    alpha_bar: f64,
    condition: &[f64],
) -> Result<Vec<f64>> {
    let mu = world.target_mean(condition)?;
    Ok(world.predict_with_mean(x, alpha_bar, &mu)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_unit_target_simplifies() {
        let world = ToyWorld::new(3, 3, 1.0, ConditionMapSpec::Identity).unwrap();
        let x = [0.4, -1.2, 2.0];
        for ab in [0.9, 0.5, 0.1] {
            let eps = analytic_epsilon(&world, &x, ab, &[0.0; 3]).unwrap();
            for (e, xi) in eps.iter().zip(x) {
                assert!((e - (1.0f64 - ab).sqrt() * xi).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tiny_spread_predicts_the_mean() {
        let world = ToyWorld::new(2, 2, 1e-9, ConditionMapSpec::Identity).unwrap();
        let x0 = posterior_mean(&world, &[5.0, -7.0], 0.3, &[1.0, 2.0]).unwrap();
        assert!((x0[0] - 1.0).abs() < 1e-12 && (x0[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let world = ToyWorld::new(2, 2, 1.0, ConditionMapSpec::Identity).unwrap();
        for ab in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                analytic_epsilon(&world, &[0.0, 0.0], ab, &[0.0, 0.0]),
                Err(Error::Usage(_))
            ));
        }
        assert!(analytic_epsilon(&world, &[0.0; 3], 0.5, &[0.0, 0.0]).is_err());
        assert!(analytic_epsilon(&world, &[0.0; 2], 0.5, &[0.0]).is_err());
        assert!(matches!(
            ToyWorld::new(3, 2, 1.0, ConditionMapSpec::Identity),
            Err(Error::Config(_))
        ));
        assert!(ToyWorld::new(2, 2, 0.0, ConditionMapSpec::Identity).is_err());
    }

    #[test]
    fn random_map_is_seeded_with_unit_rows() {
        let a = ToyWorld::new(5, 3, 1.0, ConditionMapSpec::Random { seed: 9 }).unwrap();
        let b = ToyWorld::new(5, 3, 1.0, ConditionMapSpec::Random { seed: 9 }).unwrap();
        let c = ToyWorld::new(5, 3, 1.0, ConditionMapSpec::Random { seed: 10 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for row in a.rows.as_ref().unwrap() {
            assert!((dot(row, row) - 1.0).abs() < 1e-12);
        }
        let mu = a.target_mean(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(mu.len(), 5);
    }

    #[test]
    fn config_json_round_trip() {
        let text = r#"{"data_dimension":8,"target_std":0.5,"condition_map":{"seed":3},
            "schedule":{"K":12,"curve":"linear-beta","variant":"ancestral"},"master_seed":77}"#;
        let cfg = WorldConfig::from_json(text).unwrap();
        assert_eq!(cfg.condition_map, ConditionMapSpec::Random { seed: 3 });
        assert_eq!(cfg.schedule.steps, 12);
        assert_eq!(cfg.schedule.curve, ScheduleCurve::LinearBeta);
        assert_eq!(cfg.schedule.variant, SamplerVariant::Ancestral);
        assert_eq!(
            WorldConfig::from_json(&cfg.to_json().unwrap()).unwrap(),
            cfg
        );

        let ident = WorldConfig::from_json(
            r#"{"data_dimension":4,"target_std":1,"condition_map":"identity"}"#,
        )
        .unwrap();
        assert_eq!(ident.condition_map, ConditionMapSpec::Identity);
        assert_eq!(ident.schedule, ScheduleConfig::default());
        assert!(matches!(
            WorldConfig::from_json(
                r#"{"data_dimension":4,"target_std":1,"condition_map":"other"}"#
            ),
            Err(Error::Config(_))
        ));
    }
}
