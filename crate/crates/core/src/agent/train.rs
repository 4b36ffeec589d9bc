use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{PolicyNet, ACTIONS};
use super::ppo::{ppo_update, Adam, PpoConfig, Transition};
use super::{AgentError, EnvError, RefinementAction};
use crate::embedding::Embedding;

/// Single-step episodic environment: `reset` yields a query state and
/// `step` scores one action on it.
pub trait RefinementEnvironment {
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<Embedding, EnvError>;
    fn step(&mut self, action: RefinementAction) -> Result<f64, EnvError>;
}

/// Contextual bandit with fixed per-action rewards and random unit states.
#[derive(Debug, Clone)]
pub struct SyntheticBandit {
    pub dimension: usize,
    pub rewards: [f64; ACTIONS],
}

impl SyntheticBandit {
    pub fn new(dimension: usize, rewards: [f64; ACTIONS]) -> Self {
        Self { dimension, rewards }
    }

    pub fn random_state(dimension: usize, rng: &mut impl Rng) -> Embedding {
        let v: Vec<f64> = (0..dimension).map(|_| rng.random_range(-1.0..1.0)).collect();
        Embedding::new(v).expect("finite").normalized()
    }
}

impl RefinementEnvironment for SyntheticBandit {
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<Embedding, EnvError> {
        Ok(Self::random_state(self.dimension, rng))
    }

    fn step(&mut self, action: RefinementAction) -> Result<f64, EnvError> {
        Ok(self.rewards[action.index()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotWeights {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
    pub wv: Vec<f64>,
    pub bv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub dimension: usize,
    pub hidden: usize,
    pub actions: Vec<String>,
    pub weights: SnapshotWeights,
    pub config: PpoConfig,
    pub epoch_rewards: Vec<f64>,
}

impl PolicySnapshot {
    pub fn from_policy(policy: &PolicyNet, config: PpoConfig, epoch_rewards: Vec<f64>) -> Self {
        let (d, h) = (policy.input_dim(), policy.hidden_dim());
        let p = policy.params();
        let rows = |r: std::ops::Range<usize>, width: usize| -> Vec<Vec<f64>> {
            p[r].chunks(width).map(<[f64]>::to_vec).collect()
        };
        Self {
            dimension: d,
            hidden: h,
            actions: RefinementAction::ALL.iter().map(|a| a.name().to_string()).collect(),
            weights: SnapshotWeights {
                w1: rows(policy.w1_range(), d),
                b1: p[policy.b1_range()].to_vec(),
                w2: rows(policy.w2_range(), h),
                b2: p[policy.b2_range()].to_vec(),
                wv: p[policy.wv_range()].to_vec(),
                bv: p[policy.bv_index()],
            },
            config,
            epoch_rewards,
        }
    }

    pub fn to_policy(&self) -> Result<PolicyNet, AgentError> {
        let expected: Vec<&str> = RefinementAction::ALL.iter().map(|a| a.name()).collect();
        if self.actions != expected {
            return Err(AgentError::Snapshot(format!("unexpected action list {:?}", self.actions)));
        }
        let w = &self.weights;
        let shape_ok = w.w1.len() == self.hidden
            && w.w1.iter().all(|r| r.len() == self.dimension)
            && w.w2.len() == ACTIONS
            && w.w2.iter().all(|r| r.len() == self.hidden);
        if !shape_ok {
            return Err(AgentError::Snapshot("weight matrix shape mismatch".into()));
        }
        let mut params = Vec::with_capacity(PolicyNet::param_count_for(self.dimension, self.hidden));
        w.w1.iter().for_each(|r| params.extend_from_slice(r));
        params.extend_from_slice(&w.b1);
        w.w2.iter().for_each(|r| params.extend_from_slice(r));
        params.extend_from_slice(&w.b2);
        params.extend_from_slice(&w.wv);
        params.push(w.bv);
        PolicyNet::from_params(self.dimension, self.hidden, params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        std::fs::write(path, self.to_json()).map_err(|e| AgentError::Snapshot(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(|e| AgentError::Snapshot(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| AgentError::Snapshot(e.to_string()))
    }
}

/// Collect-then-update PPO. Each epoch draws `steps_per_query` episodes
/// from the current policy, shuffles them and takes one optimizer step per
/// `batch_size` chunk.
pub fn train(
    mut policy: PolicyNet,
    env: &mut dyn RefinementEnvironment,
    config: &PpoConfig,
) -> Result<PolicySnapshot, AgentError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Adam::new(policy.param_count(), config.learning_rate);
    let mut epoch_rewards = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rollout = Vec::with_capacity(config.steps_per_query);
        for _ in 0..config.steps_per_query {
            let state = env.reset(&mut rng).map_err(AgentError::Environment)?;
            let fwd = policy.forward(state.values())?;
            let action = fwd.sample(&mut rng);
            let reward = env.step(action).map_err(AgentError::Environment)?;
            if !(0.0..=1.0).contains(&reward) {
                return Err(AgentError::RewardOutOfRange(reward));
            }
            rollout.push(Transition {
                old_logprob: fwd.log_probs[action.index()],
                value: fwd.value,
                state,
                action,
                reward,
            });
        }
        let mean = rollout.iter().map(|t| t.reward).sum::<f64>() / rollout.len() as f64;
        epoch_rewards.push(mean);
        rollout.shuffle(&mut rng);
        for chunk in rollout.chunks(config.batch_size) {
            let stats = ppo_update(&mut policy, &mut optimizer, chunk, config)?;
            log::trace!("epoch {epoch}: {stats:?}");
        }
        log::debug!("epoch {epoch}: mean reward {mean:.4}");
    }
    Ok(PolicySnapshot::from_policy(&policy, config.clone(), epoch_rewards))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ActMode;

    fn quick(epochs: usize, seed: u64) -> PpoConfig {
        PpoConfig {
            epochs,
            steps_per_query: 128,
            seed,
            ..PpoConfig::default()
        }
    }

    #[test]
    fn snapshot_roundtrip() {
        let net = PolicyNet::new(5, 3, 4);
        let snap = PolicySnapshot::from_policy(&net, PpoConfig::default(), vec![0.5]);
        let back: PolicySnapshot = serde_json::from_str(&snap.to_json()).unwrap();
        assert_eq!(back.to_policy().unwrap(), net);
        assert_eq!(back.actions, vec!["expand", "simplify", "decompose"]);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut env = SyntheticBandit::new(8, [0.3, 0.3, 0.9]);
            train(PolicyNet::new(8, 6, 1), &mut env, &quick(3, 11)).unwrap().to_json()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn flat_rewards_keep_entropy_high() {
        let mut env = SyntheticBandit::new(16, [0.5, 0.5, 0.5]);
        let snap = train(PolicyNet::new(16, 16, 2), &mut env, &quick(20, 3)).unwrap();
        let net = snap.to_policy().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 200;
        let mean_h: f64 = (0..n)
            .map(|_| net.forward(SyntheticBandit::random_state(16, &mut rng).values()).unwrap().entropy())
            .sum::<f64>()
            / n as f64;
        assert!((mean_h - 3f64.ln()).abs() <= 0.1 * 3f64.ln(), "entropy {mean_h}");
    }

    struct Failing;
    impl RefinementEnvironment for Failing {
        fn reset(&mut self, _: &mut ChaCha8Rng) -> Result<Embedding, EnvError> {
            Ok(Embedding::zeros(4))
        }
        fn step(&mut self, _: RefinementAction) -> Result<f64, EnvError> {
            Err("scorer unavailable".into())
        }
    }

    #[test]
    fn env_errors_propagate() {
        let r = train(PolicyNet::new(4, 2, 0), &mut Failing, &quick(1, 0));
        assert!(matches!(r, Err(AgentError::Environment(_))));
    }

    #[test]
    fn small_bandit_learns() {
        let mut env = SyntheticBandit::new(8, [0.3, 0.3, 0.9]);
        let snap = train(PolicyNet::new(8, 16, 5), &mut env, &quick(30, 5)).unwrap();
        let net = snap.to_policy().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..100)
            .filter(|_| {
                let s = SyntheticBandit::random_state(8, &mut rng);
                net.act(s.values(), ActMode::Greedy).unwrap().0 == RefinementAction::Decompose
            })
            .count();
        assert!(hits >= 95, "{hits}");
        assert!(snap.epoch_rewards.last().unwrap() > snap.epoch_rewards.first().unwrap());
    }
}
