use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fraud_rl::agent::AgentConfig;
use fraud_rl::baseline::BaselineConfig;
use fraud_rl::data::DatasetSpec;
use fraud_rl::environment::EnvConfig;
use fraud_rl::metrics::FraudBpsDenominator;
use fraud_rl::rewards::{RewardConfig, RewardKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Dqn,
    /// Supervised baseline classifier.
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSelection {
    pub kind: RewardKind,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_prime: Option<f64>,
    pub lambda_double: f64,
    pub balance_scale: f64,
}

impl Default for RewardSelection {
    fn default() -> Self {
        Self::from_parts(RewardKind::Combined, RewardConfig::default())
    }
}

impl RewardSelection {
    pub fn from_parts(kind: RewardKind, c: RewardConfig) -> Self {
        Self {
            kind,
            alpha: c.alpha,
            beta: c.beta,
            lambda_prime: c.lambda_prime,
            lambda_double: c.lambda_double,
            balance_scale: c.balance_scale,
        }
    }

    pub fn params(&self) -> RewardConfig {
        RewardConfig {
            alpha: self.alpha,
            beta: self.beta,
            lambda_prime: self.lambda_prime,
            lambda_double: self.lambda_double,
            balance_scale: self.balance_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub fraud_bps_denominator: FraudBpsDenominator,
}

/// Complete description of a run. Every field has a default, so a minimal
/// file only names the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub reward: RewardSelection,
    pub model: ModelKind,
    pub baseline: BaselineConfig,
    pub metrics: MetricsConfig,
    /// Master seed. Copied into the generator, agent and baseline seeds on resolve.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            reward: RewardSelection::default(),
            model: ModelKind::Dqn,
            baseline: BaselineConfig::default(),
            metrics: MetricsConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text).map_err(|e| fraud_rl::Error::InvalidConfig(e.to_string()))?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| fraud_rl::Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.env.validate()?;
        self.agent.validate()?;
        self.reward.params().validate()?;
        self.baseline.validate()?;
        if self.output_dir.as_os_str().is_empty() {
            bail!(fraud_rl::Error::InvalidConfig("output_dir must not be empty".into()));
        }
        Ok(())
    }

    /// Pushes the master seed into every component and validates.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.dataset.synth.seed = c.seed;
        c.agent.seed = c.seed;
        c.baseline.seed = c.seed;
        c.validate()?;
        Ok(c)
    }

    /// Table row label for this run.
    pub fn model_name(&self) -> &'static str {
        match self.model {
            ModelKind::Dqn => self.reward.kind.model_name(),
            ModelKind::Nn => "NN",
        }
    }

    /// The DQN run with each reward plus the baseline, sharing everything else.
    pub fn comparison_set(&self) -> Vec<RunConfig> {
        let mut out: Vec<RunConfig> = [RewardKind::Combined, RewardKind::Rprime, RewardKind::Rdouble]
            .into_iter()
            .map(|kind| RunConfig {
                model: ModelKind::Dqn,
                reward: RewardSelection { kind, ..self.reward },
                ..self.clone()
            })
            .collect();
        out.push(RunConfig {
            model: ModelKind::Nn,
            ..self.clone()
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(r#"{"dataset": {"source": "csv", "path": "x.csv"}}"#).unwrap();
        assert_eq!(c.env.episode_length, 500);
        assert_eq!(c.env.rate_window, 4000);
        assert_eq!(c.agent.gamma, 0.99);
        assert_eq!(c.agent.batch_size, 32);
        assert_eq!(c.agent.learning_rate, 0.005);
        assert_eq!(c.agent.replay_capacity, 75_000);
        assert_eq!(c.agent.target_sync_episodes, 25);
        assert_eq!((c.agent.epsilon_start, c.agent.epsilon_min), (1.0, 0.01));
        assert_eq!((c.reward.alpha, c.reward.beta), (0.02, 0.5));
        assert_eq!(c.baseline.learning_rate, 0.0002);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"sed": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"agent": {"gama": 0.9}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"reward": {"kind": "other"}}"#).is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let c = RunConfig::from_json(r#"{"agent": {"gamma": 2.0}}"#).unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::from_json(r#"{"dataset": {"source": "csv"}}"#).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn resolve_copies_the_seed() {
        let c = RunConfig { seed: 42, ..RunConfig::default() }.resolved().unwrap();
        assert_eq!((c.dataset.synth.seed, c.agent.seed, c.baseline.seed), (42, 42, 42));
        let back = RunConfig::from_json(&c.to_json_pretty().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn comparison_set_names() {
        let names: Vec<_> = RunConfig::default().comparison_set().iter().map(|c| c.model_name()).collect();
        assert_eq!(names, vec!["DQNR", "DQNR'", "DQNR''", "NN"]);
    }
}
