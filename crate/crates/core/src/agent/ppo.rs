use serde::{Deserialize, Serialize};

use super::policy::{PolicyNet, ACTIONS};
use super::{AgentError, RefinementAction};
use crate::embedding::Embedding;

const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_query: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            batch_size: 64,
            epochs: 100,
            steps_per_query: 500,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.into()));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return bad("loss coefficients must be non-negative");
        }
        if self.batch_size == 0 || self.steps_per_query == 0 {
            return bad("batch_size and steps_per_query must be positive");
        }
        Ok(())
    }
}

/// One single-step episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Embedding,
    pub action: RefinementAction,
    pub old_logprob: f64,
    pub reward: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionTerms {
    pub ratio: f64,
    pub advantage: f64,
    pub unclipped: f64,
    pub clipped: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchEvaluation {
    pub terms: Vec<TransitionTerms>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// policy_loss - entropy_coef * entropy + value_coef * value_loss
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Batch-standardized advantages `R - V_old`.
fn advantages(batch: &[Transition]) -> Vec<f64> {
    let raw: Vec<f64> = batch.iter().map(|t| t.reward - t.value).collect();
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(STD_FLOOR);
    raw.iter().map(|a| (a - mean) / std).collect()
}

/// Evaluates the PPO loss on `batch` and its gradient with respect to
/// every parameter of `policy` (same flat layout as [`PolicyNet::params`]).
pub fn loss_and_grad(
    policy: &PolicyNet,
    batch: &[Transition],
    config: &PpoConfig,
) -> Result<(BatchEvaluation, Vec<f64>), AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let eps = config.clip_epsilon;
    let adv = advantages(batch);
    let mut grad = vec![0.0; policy.param_count()];
    let mut terms = Vec::with_capacity(batch.len());
    let (mut policy_loss, mut value_loss, mut entropy) = (0.0, 0.0, 0.0);

    for (t, &a_hat) in batch.iter().zip(&adv) {
        let state = t.state.values();
        let fwd = policy.forward(state)?;
        let act = t.action.index();
        let ratio = (fwd.log_probs[act] - t.old_logprob).exp();
        let unclipped = ratio * a_hat;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * a_hat;
        let surrogate = unclipped.min(clipped);
        debug_assert!(
            surrogate.abs() <= ratio.max(1.0 + eps) * a_hat.abs() * (1.0 + 1e-12) + 1e-300,
            "surrogate exceeds clipping bound"
        );
        terms.push(TransitionTerms {
            ratio,
            advantage: a_hat,
            unclipped,
            clipped,
        });
        policy_loss -= surrogate / n;
        let h = fwd.entropy();
        entropy += h / n;
        let err = fwd.value - t.reward;
        value_loss += err * err / n;

        // d(surrogate)/d(logp) is ratio * A on the unclipped branch, 0 when
        // the clipped constant is the minimum.
        let dsurr = if unclipped <= clipped { unclipped } else { 0.0 };
        let probs = fwd.probs();
        let mut dlogits = [0.0; ACTIONS];
        for (j, d) in dlogits.iter_mut().enumerate() {
            let onehot = if j == act { 1.0 } else { 0.0 };
            *d = -dsurr * (onehot - probs[j]) / n
                + config.entropy_coef * probs[j] * (fwd.log_probs[j] + h) / n;
        }
        let dvalue = 2.0 * config.value_coef * err / n;
        policy.backward(state, &fwd, &dlogits, dvalue, &mut grad);
    }

    let total = policy_loss - config.entropy_coef * entropy + config.value_coef * value_loss;
    Ok((
        BatchEvaluation {
            terms,
            policy_loss,
            value_loss,
            entropy,
            total,
        },
        grad,
    ))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// One optimizer step on the batch loss.
pub fn ppo_update(
    policy: &mut PolicyNet,
    optimizer: &mut Adam,
    batch: &[Transition],
    config: &PpoConfig,
) -> Result<UpdateStats, AgentError> {
    let (eval, grad) = loss_and_grad(policy, batch, config)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(AgentError::NonFiniteGradient);
    }
    optimizer.step(policy.params_mut(), &grad);
    let eps = config.clip_epsilon;
    let clipped = eval.terms.iter().filter(|t| (t.ratio - 1.0).abs() > eps).count();
    Ok(UpdateStats {
        policy_loss: eval.policy_loss,
        value_loss: eval.value_loss,
        entropy: eval.entropy,
        clip_fraction: clipped as f64 / batch.len() as f64,
    })
}
