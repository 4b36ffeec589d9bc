use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AgentError, RefinementAction};

pub const ACTIONS: usize = 3;

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64; ACTIONS]) -> [f64; ACTIONS] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.map(|z| z - lse)
}

pub fn softmax(logits: &[f64; ACTIONS]) -> [f64; ACTIONS] {
    log_softmax(logits).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Greedy,
    Sample(u64),
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub logits: [f64; ACTIONS],
    pub log_probs: [f64; ACTIONS],
    pub value: f64,
}

impl Forward {
    pub fn probs(&self) -> [f64; ACTIONS] {
        self.log_probs.map(f64::exp)
    }

    pub fn entropy(&self) -> f64 {
        -self.log_probs.iter().map(|lp| lp.exp() * lp).sum::<f64>()
    }

    pub fn greedy(&self) -> RefinementAction {
        let mut best = 0;
        for a in 1..ACTIONS {
            if self.logits[a] > self.logits[best] {
                best = a;
            }
        }
        RefinementAction::ALL[best]
    }

    /// Inverse-CDF draw from the action distribution.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> RefinementAction {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in self.probs().iter().enumerate() {
            acc += p;
            if u < acc {
                return RefinementAction::ALL[a];
            }
        }
        RefinementAction::ALL[ACTIONS - 1]
    }
}

/// Actor-critic MLP: `input -> tanh(hidden) -> 3 logits`, with a scalar
/// value head on the same hidden layer.
///
/// Parameters live in one flat vector laid out as
/// `w1 (hidden x input), b1, w2 (3 x hidden), b2, wv (hidden), bv`, all
/// row-major, so the optimizer and gradient checks can treat them uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    input: usize,
    hidden: usize,
    params: Vec<f64>,
}

impl PolicyNet {
    pub fn param_count_for(input: usize, hidden: usize) -> usize {
        hidden * input + hidden + ACTIONS * hidden + ACTIONS + hidden + 1
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            params: vec![0.0; Self::param_count_for(input, hidden)],
        }
    }

    /// Weights uniform in (-0.05, 0.05) from `seed`; biases zero.
    pub fn new(input: usize, hidden: usize, seed: u64) -> Self {
        let mut net = Self::zeros(input, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w1, w2, wv) = (net.w1_range(), net.w2_range(), net.wv_range());
        for r in [w1, w2, wv] {
            for p in &mut net.params[r] {
                *p = rng.random_range(-0.05..0.05);
            }
        }
        net
    }

    pub fn from_params(input: usize, hidden: usize, params: Vec<f64>) -> Result<Self, AgentError> {
        let expected = Self::param_count_for(input, hidden);
        if params.len() != expected {
            return Err(AgentError::Snapshot(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(AgentError::Snapshot("non-finite parameter".into()));
        }
        Ok(Self { input, hidden, params })
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.input
    }
    pub(crate) fn b1_range(&self) -> std::ops::Range<usize> {
        let s = self.w1_range().end;
        s..s + self.hidden
    }
    pub(crate) fn w2_range(&self) -> std::ops::Range<usize> {
        let s = self.b1_range().end;
        s..s + ACTIONS * self.hidden
    }
    pub(crate) fn b2_range(&self) -> std::ops::Range<usize> {
        let s = self.w2_range().end;
        s..s + ACTIONS
    }
    pub(crate) fn wv_range(&self) -> std::ops::Range<usize> {
        let s = self.b2_range().end;
        s..s + self.hidden
    }
    pub(crate) fn bv_index(&self) -> usize {
        self.wv_range().end
    }

    pub fn forward(&self, state: &[f64]) -> Result<Forward, AgentError> {
        if state.len() != self.input {
            return Err(AgentError::DimensionMismatch {
                expected: self.input,
                actual: state.len(),
            });
        }
        let p = &self.params;
        let w1 = &p[self.w1_range()];
        let b1 = &p[self.b1_range()];
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &w1[h * self.input..(h + 1) * self.input];
                let z: f64 = row.iter().zip(state).map(|(w, x)| w * x).sum();
                (z + b1[h]).tanh()
            })
            .collect();
        let w2 = &p[self.w2_range()];
        let b2 = &p[self.b2_range()];
        let mut logits = [0.0; ACTIONS];
        for (a, l) in logits.iter_mut().enumerate() {
            let row = &w2[a * self.hidden..(a + 1) * self.hidden];
            *l = b2[a] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(AgentError::NonFiniteLogits);
        }
        let wv = &p[self.wv_range()];
        let value = p[self.bv_index()] + wv.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        Ok(Forward {
            log_probs: log_softmax(&logits),
            hidden,
            logits,
            value,
        })
    }

    /// Accumulates `scale * d(output)/d(params)` into `grad`, given the
    /// upstream gradients on the logits and the value.
    pub(crate) fn backward(
        &self,
        state: &[f64],
        fwd: &Forward,
        dlogits: &[f64; ACTIONS],
        dvalue: f64,
        grad: &mut [f64],
    ) {
        let (hn, inp) = (self.hidden, self.input);
        let w2 = self.w2_range();
        let b2 = self.b2_range();
        let wv = self.wv_range();
        let mut dhidden = vec![0.0; hn];
        for a in 0..ACTIONS {
            let g = dlogits[a];
            if g == 0.0 {
                continue;
            }
            grad[b2.start + a] += g;
            let off = w2.start + a * hn;
            for h in 0..hn {
                grad[off + h] += g * fwd.hidden[h];
                dhidden[h] += g * self.params[off + h];
            }
        }
        if dvalue != 0.0 {
            grad[self.bv_index()] += dvalue;
            for h in 0..hn {
                grad[wv.start + h] += dvalue * fwd.hidden[h];
                dhidden[h] += dvalue * self.params[wv.start + h];
            }
        }
        let b1 = self.b1_range().start;
        for h in 0..hn {
            let dz = dhidden[h] * (1.0 - fwd.hidden[h] * fwd.hidden[h]);
            if dz == 0.0 {
                continue;
            }
            grad[b1 + h] += dz;
            let row = &mut grad[h * inp..(h + 1) * inp];
            for (g, x) in row.iter_mut().zip(state) {
                *g += dz * x;
            }
        }
    }

    /// Picks an action and returns its log-probability.
    pub fn act(&self, state: &[f64], mode: ActMode) -> Result<(RefinementAction, f64), AgentError> {
        let fwd = self.forward(state)?;
        let action = match mode {
            ActMode::Greedy => fwd.greedy(),
            ActMode::Sample(seed) => fwd.sample(&mut ChaCha8Rng::seed_from_u64(seed)),
        };
        Ok((action, fwd.log_probs[action.index()]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_net_is_uniform_and_picks_expand() {
        let net = PolicyNet::zeros(8, 4);
        let fwd = net.forward(&[0.3; 8]).unwrap();
        for p in fwd.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let (a, lp) = net.act(&[0.3; 8], ActMode::Greedy).unwrap();
        assert_eq!(a, RefinementAction::Expand);
        assert!((lp + 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dominant_logit_wins() {
        let mut net = PolicyNet::zeros(2, 2);
        let b2 = net.b2_range();
        net.params_mut()[b2.start + 1] = 5.0;
        let (a, lp) = net.act(&[0.0, 0.0], ActMode::Greedy).unwrap();
        assert_eq!(a, RefinementAction::Simplify);
        assert!(lp.exp() > 0.98);
    }

    #[test]
    fn sampling_is_reproducible() {
        let net = PolicyNet::new(16, 8, 3);
        let s: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        assert_eq!(net.act(&s, ActMode::Sample(9)).unwrap(), net.act(&s, ActMode::Sample(9)).unwrap());
    }

    #[test]
    fn non_finite_logits_are_reported() {
        let mut net = PolicyNet::zeros(2, 2);
        let b2 = net.b2_range();
        net.params_mut()[b2.start] = f64::INFINITY;
        assert!(matches!(net.act(&[0.0, 0.0], ActMode::Greedy), Err(AgentError::NonFiniteLogits)));
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let net = PolicyNet::zeros(4, 2);
        assert!(matches!(net.forward(&[0.0; 3]), Err(AgentError::DimensionMismatch { .. })));
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = PolicyNet::new(10, 5, 1);
        assert_eq!(a, PolicyNet::new(10, 5, 1));
        assert_ne!(a, PolicyNet::new(10, 5, 2));
        assert!(a.params().iter().all(|p| p.abs() < 0.05));
        assert!(a.params()[a.b1_range()].iter().all(|p| *p == 0.0));
        assert!(a.params()[a.b2_range()].iter().all(|p| *p == 0.0));
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(logits in prop::array::uniform3(-700.0..700.0f64)) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn policy_probs_sum_to_one(seed in any::<u64>(), state in prop::collection::vec(-1.0..1.0f64, 12)) {
            let net = PolicyNet::new(12, 6, seed);
            let fwd = net.forward(&state).unwrap();
            prop_assert!((fwd.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
