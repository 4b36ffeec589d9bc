//! Query-refinement policy: a small actor-critic MLP over query embeddings
//! that picks one of three rewriting actions, trained with clipped PPO.

mod policy;
mod ppo;
mod train;

pub use policy::{log_softmax, softmax, ActMode, Forward, PolicyNet};
pub use ppo::{
    loss_and_grad, ppo_update, Adam, BatchEvaluation, PpoConfig, Transition, TransitionTerms,
    UpdateStats,
};
pub use train::{train, PolicySnapshot, RefinementEnvironment, SnapshotWeights, SyntheticBandit};

use serde::{Deserialize, Serialize};

pub type EnvError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("policy produced non-finite logits")]
    NonFiniteLogits,
    #[error("state dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("reward component {name} = {value} outside [0, 1]")]
    ComponentOutOfRange { name: &'static str, value: f64 },
    #[error("reward weights must be non-negative and sum to 1, got {0:?}")]
    InvalidWeights([f64; 4]),
    #[error("invalid ppo config: {0}")]
    InvalidConfig(String),
    #[error("ppo update on an empty batch")]
    EmptyBatch,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("environment reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("environment: {0}")]
    Environment(#[source] EnvError),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// The three refinement actions. Indices are part of the snapshot format
/// and must never change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefinementAction {
    Expand = 0,
    Simplify = 1,
    Decompose = 2,
}

impl RefinementAction {
    pub const ALL: [RefinementAction; 3] = [Self::Expand, Self::Simplify, Self::Decompose];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Expand => "expand",
            Self::Simplify => "simplify",
            Self::Decompose => "decompose",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

impl std::fmt::Display for RefinementAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub relevance: f64,
    pub causal_depth: f64,
    pub similarity: f64,
    pub hallucination: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            relevance: 0.25,
            causal_depth: 0.25,
            similarity: 0.25,
            hallucination: 0.25,
        }
    }
}

impl RewardWeights {
    pub fn new(l1: f64, l2: f64, l3: f64, l4: f64) -> Result<Self, AgentError> {
        let w = Self {
            relevance: l1,
            causal_depth: l2,
            similarity: l3,
            hallucination: l4,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.relevance, self.causal_depth, self.similarity, self.hallucination]
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let a = self.as_array();
        let ok = a.iter().all(|v| v.is_finite() && *v >= 0.0) && (a.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(AgentError::InvalidWeights(a))
        }
    }
}

/// Reward components, each already in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub relevance: f64,
    pub causal_depth: f64,
    pub similarity: f64,
    pub hallucination: f64,
}

/// Raw measurements before normalization: cosines in [-1, 1], depth as
/// mean hop count, hallucination as a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawComponents {
    pub relevance: f64,
    pub causal_depth: f64,
    pub similarity: f64,
    pub hallucination: f64,
}

pub fn normalize_components(raw: RawComponents, max_hops: usize) -> RewardComponents {
    let depth = if max_hops == 0 {
        0.0
    } else {
        (raw.causal_depth.max(0.0) / max_hops as f64).min(1.0)
    };
    RewardComponents {
        relevance: raw.relevance.clamp(0.0, 1.0),
        causal_depth: depth,
        similarity: raw.similarity.clamp(0.0, 1.0),
        hallucination: raw.hallucination.clamp(0.0, 1.0),
    }
}

pub fn compute_reward(
    weights: &RewardWeights,
    relevance: f64,
    causal_depth: f64,
    similarity: f64,
    hallucination: f64,
) -> Result<f64, AgentError> {
    for (name, value) in [
        ("relevance", relevance),
        ("causal_depth", causal_depth),
        ("similarity", similarity),
        ("hallucination", hallucination),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(AgentError::ComponentOutOfRange { name, value });
        }
    }
    let r = weights.relevance * relevance
        + weights.causal_depth * causal_depth
        + weights.similarity * similarity
        + weights.hallucination * (1.0 - hallucination);
    // weights sum to 1 only within 1e-9
    Ok(r.clamp(0.0, 1.0))
}

impl RewardComponents {
    pub fn reward(&self, weights: &RewardWeights) -> Result<f64, AgentError> {
        compute_reward(weights, self.relevance, self.causal_depth, self.similarity, self.hallucination)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn action_index_bijection() {
        for (i, a) in RefinementAction::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(RefinementAction::from_index(i), Some(*a));
            assert_eq!(RefinementAction::from_name(a.name()), Some(*a));
        }
        assert_eq!(RefinementAction::from_index(3), None);
        assert_eq!(serde_json::to_string(&RefinementAction::Decompose).unwrap(), "\"decompose\"");
    }

    #[test]
    fn reward_bounds_and_arithmetic() {
        let w = RewardWeights::default();
        assert_eq!(compute_reward(&w, 1.0, 1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(compute_reward(&w, 0.0, 0.0, 0.0, 1.0).unwrap(), 0.0);
        let r = compute_reward(&w, 0.8, 0.5, 1.0, 0.2).unwrap();
        assert!((r - 0.775).abs() < 1e-12);
        let skew = RewardWeights::new(0.7, 0.1, 0.1, 0.1).unwrap();
        assert!((compute_reward(&skew, 1.0, 1.0, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reward_rejects_out_of_range() {
        let w = RewardWeights::default();
        assert!(matches!(
            compute_reward(&w, 1.2, 0.0, 0.0, 0.0),
            Err(AgentError::ComponentOutOfRange { name: "relevance", .. })
        ));
        assert!(compute_reward(&w, 0.0, 0.0, 0.0, -0.1).is_err());
        assert!(RewardWeights::new(0.5, 0.5, 0.5, 0.0).is_err());
        assert!(RewardWeights::new(-0.1, 0.5, 0.3, 0.3).is_err());
    }

    #[test]
    fn normalization_examples() {
        let n = normalize_components(
            RawComponents {
                relevance: -0.3,
                causal_depth: 2.0,
                similarity: 0.4,
                hallucination: 0.25,
            },
            3,
        );
        assert_eq!(n.relevance, 0.0);
        assert!((n.causal_depth - 2.0 / 3.0).abs() < 1e-4);
        assert_eq!(n.similarity, 0.4);
        assert_eq!(n.hallucination, 0.25);
        let sat = normalize_components(
            RawComponents {
                relevance: 1.0,
                causal_depth: 7.0,
                similarity: 1.0,
                hallucination: 0.0,
            },
            3,
        );
        assert_eq!(sat.causal_depth, 1.0);
    }

    fn weights() -> impl Strategy<Value = RewardWeights> {
        (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_filter_map("zero", |(a, b, c, d)| {
            let s = a + b + c + d;
            (s > 1e-3).then(|| RewardWeights {
                relevance: a / s,
                causal_depth: b / s,
                similarity: c / s,
                hallucination: 1.0 - (a + b + c) / s,
            })
        })
    }

    proptest! {
        #[test]
        fn reward_is_monotone(
            w in weights(),
            base in prop::array::uniform4(0.0..=1.0f64),
            bump in 0.0..=1.0f64,
            which in 0usize..4,
        ) {
            let r0 = compute_reward(&w, base[0], base[1], base[2], base[3]).unwrap();
            prop_assert!((0.0..=1.0).contains(&r0));
            let mut up = base;
            up[which] = (up[which] + bump).min(1.0);
            let r1 = compute_reward(&w, up[0], up[1], up[2], up[3]).unwrap();
            if which == 3 {
                prop_assert!(r1 <= r0 + 1e-12);
            } else {
                prop_assert!(r1 >= r0 - 1e-12);
            }
        }
    }
}
