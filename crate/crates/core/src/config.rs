//! Flat TOML settings for the pipeline and for policy training.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{PpoConfig, RewardWeights};
use crate::embedding::DIMENSION;
use crate::llm::PromptStyle;
use crate::pipeline::{PipelineConfig, StageFlags};
use crate::retrieval::RetrievalParams;
use crate::verification::Thresholds;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    toml::from_str(&read(path)?).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Hashing,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub k: usize,
    pub max_hops: usize,
    pub max_paths: usize,
    pub theta_align: f64,
    pub max_seeds: usize,
    pub tau: f64,
    pub delta: f64,
    pub theta_support: f64,
    pub max_iterations: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub encoder: EncoderKind,
    pub encoder_url: Option<String>,
    pub dimension: usize,
    pub prompt_style: PromptStyle,
    pub stages: String,
    /// Answer from LLM-verified edges only.
    pub verified_only: bool,
}

impl Default for Settings {
    fn default() -> Self {
        let p = PipelineConfig::default();
        let w = p.reward;
        Self {
            k: p.retrieval.k,
            max_hops: p.retrieval.max_hops,
            max_paths: p.retrieval.max_paths,
            theta_align: p.retrieval.theta_align,
            max_seeds: p.retrieval.max_seeds,
            tau: p.thresholds.tau,
            delta: p.thresholds.delta,
            theta_support: p.thresholds.theta_support,
            max_iterations: p.max_iterations,
            lambda1: w.relevance,
            lambda2: w.causal_depth,
            lambda3: w.similarity,
            lambda4: w.hallucination,
            encoder: EncoderKind::Hashing,
            encoder_url: None,
            dimension: DIMENSION,
            prompt_style: PromptStyle::Structured,
            stages: "full".into(),
            verified_only: false,
        }
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse(path)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, ConfigError> {
        let config = PipelineConfig {
            retrieval: RetrievalParams {
                k: self.k,
                max_hops: self.max_hops,
                max_paths: self.max_paths,
                theta_align: self.theta_align,
                max_seeds: self.max_seeds,
            },
            thresholds: Thresholds {
                tau: self.tau,
                delta: self.delta,
                theta_support: self.theta_support,
                max_hops: self.max_hops,
            },
            max_iterations: self.max_iterations,
            reward: RewardWeights::new(self.lambda1, self.lambda2, self.lambda3, self.lambda4)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            stages: StageFlags::parse(&self.stages).map_err(ConfigError::Invalid)?,
            prompt_style: self.prompt_style,
        };
        config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    /// Fixed per-action rewards over random states.
    Bandit,
    /// Rewards from full pipeline runs over the gold queries.
    Pipeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub env: EnvKind,
    pub hidden: usize,
    pub init_seed: u64,
    pub bandit_rewards: [f64; 3],
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_query: usize,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let p = PpoConfig::default();
        Self {
            env: EnvKind::Pipeline,
            hidden: 256,
            init_seed: 0,
            bandit_rewards: [0.3, 0.3, 0.9],
            clip_epsilon: p.clip_epsilon,
            learning_rate: p.learning_rate,
            entropy_coef: p.entropy_coef,
            value_coef: p.value_coef,
            batch_size: p.batch_size,
            epochs: p.epochs,
            steps_per_query: p.steps_per_query,
            seed: p.seed,
        }
    }
}

impl TrainSettings {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse(path)
    }

    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            clip_epsilon: self.clip_epsilon,
            learning_rate: self.learning_rate,
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
            batch_size: self.batch_size,
            epochs: self.epochs,
            steps_per_query: self.steps_per_query,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_pipeline_defaults() {
        assert_eq!(Settings::default().pipeline_config().unwrap(), PipelineConfig::default());
    }

    #[test]
    fn partial_file_and_unknown_keys() {
        let s: Settings = toml::from_str("k = 8\ntau = 0.5\nstages = \"baseline\"\nverified_only = true").unwrap();
        assert!(s.verified_only);
        let c = s.pipeline_config().unwrap();
        assert_eq!(c.retrieval.k, 8);
        assert_eq!(c.thresholds.tau, 0.5);
        assert_eq!(c.stages, StageFlags::BASELINE);
        assert!(toml::from_str::<Settings>("kk = 1").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let s = Settings {
            delta: 1.5,
            ..Settings::default()
        };
        assert!(s.pipeline_config().is_err());
        let s = Settings {
            lambda1: 0.9,
            ..Settings::default()
        };
        assert!(s.pipeline_config().is_err());
    }

    #[test]
    fn train_settings_roundtrip() {
        let t: TrainSettings = toml::from_str("env = \"bandit\"\nepochs = 5").unwrap();
        assert_eq!(t.env, EnvKind::Bandit);
        assert_eq!(t.ppo().epochs, 5);
        assert_eq!(t.ppo().batch_size, 64);
    }
}
