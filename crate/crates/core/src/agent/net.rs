//! Shared-trunk policy/value network.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::ItemId;
use crate::nn::{
    self, dropout, masked_softmax, Activation, Checkpoint, Dense, DropoutMask, Gradients, Mode,
    ParamStore,
};
use crate::rngs;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    num_items: usize,
    hidden: [usize; 2],
    dropout: f64,
    store: ParamStore,
    trunk1: Dense,
    trunk2: Dense,
    policy: Dense,
    value: Dense,
}

/// Forward activations of one state, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NetCache {
    pub input: Vec<f64>,
    h1: Vec<f64>,
    h1_dropped: Vec<f64>,
    mask1: DropoutMask,
    h2: Vec<f64>,
    h2_dropped: Vec<f64>,
    mask2: DropoutMask,
    pub logits: Vec<f64>,
    pub value: f64,
}

/// Result of sampling one action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub action: ItemId,
    pub log_prob: f64,
    pub value: f64,
    pub probs: Vec<f64>,
    pub cache: NetCache,
}

impl PolicyValueNet {
    pub fn new(num_items: usize, hidden: [usize; 2], dropout: f64, seed: u64) -> Self {
        let mut rng = rngs::stream(seed, "policy-init", &[]);
        let mut store = ParamStore::new();
        let trunk1 = Dense::new(&mut store, "trunk1", 2 * num_items, hidden[0], Activation::Tanh, &mut rng);
        let trunk2 = Dense::new(&mut store, "trunk2", hidden[0], hidden[1], Activation::Tanh, &mut rng);
        let policy = Dense::new(&mut store, "policy", hidden[1], num_items, Activation::Identity, &mut rng);
        let value = Dense::new(&mut store, "value", hidden[1], 1, Activation::Identity, &mut rng);
        PolicyValueNet {
            num_items,
            hidden,
            dropout,
            store,
            trunk1,
            trunk2,
            policy,
            value,
        }
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn value_head(&self) -> &Dense {
        &self.value
    }

    pub fn policy_head(&self) -> &Dense {
        &self.policy
    }

    pub fn forward<R: Rng + ?Sized>(&self, state: &[f64], mode: Mode, rng: &mut R) -> Result<NetCache> {
        if state.len() != 2 * self.num_items {
            return Err(Error::Shape(format!(
                "state has {} values, network expects {}",
                state.len(),
                2 * self.num_items
            )));
        }
        let h1 = self.trunk1.forward(&self.store, state);
        let (h1_dropped, mask1) = dropout(&h1, self.dropout, mode, rng);
        let h2 = self.trunk2.forward(&self.store, &h1_dropped);
        let (h2_dropped, mask2) = dropout(&h2, self.dropout, mode, rng);
        let logits = self.policy.forward(&self.store, &h2_dropped);
        let value = self.value.forward(&self.store, &h2_dropped)[0];
        Ok(NetCache {
            input: state.to_vec(),
            h1,
            h1_dropped,
            mask1,
            h2,
            h2_dropped,
            mask2,
            logits,
            value,
        })
    }

    /// Backpropagates `dlogits` and `dvalue` through the cached forward pass.
    pub fn backward(&self, cache: &NetCache, dlogits: &[f64], dvalue: f64, grads: &mut Gradients) {
        let mut dh2 = self
            .policy
            .backward(&self.store, &cache.h2_dropped, &cache.logits, dlogits, grads);
        let dh2_value = self
            .value
            .backward(&self.store, &cache.h2_dropped, &[cache.value], &[dvalue], grads);
        for (a, b) in dh2.iter_mut().zip(&dh2_value) {
            *a += b;
        }
        cache.mask2.backward(&mut dh2);
        let mut dh1 = self.trunk2.backward(&self.store, &cache.h1_dropped, &cache.h2, &dh2, grads);
        cache.mask1.backward(&mut dh1);
        self.trunk1.backward(&self.store, &cache.input, &cache.h1, &dh1, grads);
    }

    /// Samples (or, with `greedy`, takes the most probable) action among
    /// `candidates` from the masked policy.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        candidates: &[ItemId],
        mode: Mode,
        greedy: bool,
        rng: &mut R,
    ) -> Result<ActOutput> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        if let Some(&bad) = candidates.iter().find(|&&c| c >= self.num_items) {
            return Err(Error::ItemOutOfRange {
                item: bad,
                num_items: self.num_items,
            });
        }
        let cache = self.forward(state, mode, rng)?;
        let probs = masked_softmax(&cache.logits, candidates);
        let action = if greedy {
            argmax(candidates, &probs)
        } else {
            sample_from(candidates, &probs, rng)
        };
        Ok(ActOutput {
            action,
            log_prob: probs[action].ln(),
            value: cache.value,
            probs,
            cache,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = BTreeMap::from([
            ("model".to_string(), "policy-value".to_string()),
            ("num_items".to_string(), self.num_items.to_string()),
            ("hidden1".to_string(), self.hidden[0].to_string()),
            ("hidden2".to_string(), self.hidden[1].to_string()),
            ("dropout".to_string(), self.dropout.to_string()),
        ]);
        Checkpoint::from_store(&self.store, meta)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta.get("model").map(String::as_str) != Some("policy-value") {
            return Err(Error::Checkpoint("not a policy-value checkpoint".into()));
        }
        let mut net = PolicyValueNet::new(
            ckpt.meta_value("num_items")?,
            [ckpt.meta_value("hidden1")?, ckpt.meta_value("hidden2")?],
            ckpt.meta_value("dropout")?,
            0,
        );
        ckpt.restore_into(&mut net.store)?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        nn::save_checkpoint(path, &self.to_checkpoint())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&nn::load_checkpoint(path)?)
    }
}

/// Highest-probability candidate; ties go to the lowest id.
pub(crate) fn argmax(candidates: &[ItemId], probs: &[f64]) -> ItemId {
    let mut best = candidates[0];
    for &c in candidates {
        if probs[c] > probs[best] || (probs[c] == probs[best] && c < best) {
            best = c;
        }
    }
    best
}

/// Inverse-CDF draw over `candidates` in the given order.
pub(crate) fn sample_from<R: Rng + ?Sized>(candidates: &[ItemId], probs: &[f64], rng: &mut R) -> ItemId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &c in candidates {
        acc += probs[c];
        if u < acc {
            return c;
        }
    }
    *candidates
        .iter()
        .rev()
        .find(|&&c| probs[c] > 0.0)
        .unwrap_or(&candidates[candidates.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_candidate_has_zero_log_prob() {
        let net = PolicyValueNet::new(5, [16, 8], 0.0, 1);
        let mut rng = rngs::stream(0, "act", &[]);
        let out = net.act(&[0.3; 10], &[3], Mode::Eval, false, &mut rng).unwrap();
        assert_eq!(out.action, 3);
        assert_eq!(out.log_prob, 0.0);
        assert!(net.act(&[0.3; 10], &[], Mode::Eval, false, &mut rng).is_err());
        assert!(net.act(&[0.3; 9], &[1], Mode::Eval, false, &mut rng).is_err());
    }

    #[test]
    fn uniform_logits_sample_uniformly() {
        let mut net = PolicyValueNet::new(6, [16, 8], 0.0, 2);
        let w = net.policy.w;
        net.store.get_mut(w).fill(0.0);
        let cands = [0, 2, 3, 5];
        let mut rng = rngs::stream(1, "act", &[]);
        let mut counts = [0usize; 6];
        for _ in 0..10_000 {
            let out = net.act(&[0.5; 12], &cands, Mode::Eval, false, &mut rng).unwrap();
            assert!(cands.contains(&out.action));
            counts[out.action] += 1;
        }
        for &c in &cands {
            let f = counts[c] as f64 / 10_000.0;
            assert!((f - 0.25).abs() < 0.03, "{c}: {f}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = PolicyValueNet::new(4, [8, 4], 0.2, 3);
        let back = PolicyValueNet::from_checkpoint(&Checkpoint::from_bytes(&net.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, net);
    }
}
