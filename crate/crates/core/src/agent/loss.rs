//! Actor-critic objective.
//!
//! Per step: `(v - R)^2 + alpha * (-log pi(a) * (R - v_detached))
//! + beta * (-log pi(a) * R)`, averaged over all steps. The advantage uses
//! the value estimate as a constant, so no policy term reaches the value
//! head. An optional entropy bonus subtracts `entropy_weight * H(pi)`.

use serde::Serialize;

use super::net::{NetCache, PolicyValueNet};
use crate::graph::ItemId;
use crate::nn::{log_prob_grad, masked_softmax, Gradients};

/// One step's contribution to the loss.
#[derive(Debug, Clone, Copy)]
pub struct LossInput<'a> {
    pub cache: &'a NetCache,
    pub candidates: &'a [ItemId],
    pub action: ItemId,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossParts {
    pub value: f64,
    pub policy: f64,
    pub enhanced: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Evaluates the loss over `steps` and accumulates its gradient into `grads`.
pub fn actor_critic_loss(
    net: &PolicyValueNet,
    steps: &[LossInput<'_>],
    alpha: f64,
    beta: f64,
    entropy_weight: f64,
    grads: &mut Gradients,
) -> LossParts {
    let n = steps.len().max(1) as f64;
    let mut parts = LossParts::default();
    for s in steps {
        let probs = masked_softmax(&s.cache.logits, s.candidates);
        let log_p = probs[s.action].ln();
        let v = s.cache.value;
        let baseline = v;
        let advantage = s.ret - baseline;

        parts.value += (v - s.ret).powi(2);
        parts.policy += -log_p * advantage;
        parts.enhanced += -log_p * s.ret;

        // d(-log p)/dlogits = probs - onehot
        let coef = alpha * advantage + beta * s.ret;
        let mut dlogits: Vec<f64> = log_prob_grad(&probs, s.action)
            .into_iter()
            .map(|g| -coef * g / n)
            .collect();

        if entropy_weight != 0.0 {
            let entropy: f64 = s
                .candidates
                .iter()
                .map(|&c| probs[c])
                .filter(|&p| p > 0.0)
                .map(|p| -p * p.ln())
                .sum();
            parts.entropy += entropy;
            // dH/dz_j = -p_j (ln p_j + H)
            for &c in s.candidates {
                let p = probs[c];
                if p > 0.0 {
                    dlogits[c] += entropy_weight * p * (p.ln() + entropy) / n;
                }
            }
        }
        let dvalue = 2.0 * (v - s.ret) / n;
        net.backward(s.cache, &dlogits, dvalue, grads);
    }
    parts.value /= n;
    parts.policy /= n;
    parts.enhanced /= n;
    parts.entropy /= n;
    parts.total = parts.value + alpha * parts.policy + beta * parts.enhanced
        - entropy_weight * parts.entropy;
    parts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mode, ParamId};
    use crate::rngs;

    struct Toy {
        net: PolicyValueNet,
        states: Vec<Vec<f64>>,
        candidates: Vec<Vec<ItemId>>,
        actions: Vec<ItemId>,
        returns: Vec<f64>,
    }

    fn toy() -> Toy {
        Toy {
            net: PolicyValueNet::new(3, [6, 4], 0.0, 7),
            states: vec![vec![0.2, 0.7, 0.4, 0.0, 0.0, 1.0], vec![0.5, 0.8, 0.45, 0.0, 0.0, 1.0]],
            candidates: vec![vec![0, 1], vec![0, 1, 2]],
            actions: vec![1, 2],
            returns: vec![0.99 * 0.6, 0.6],
        }
    }

    fn eval(t: &Toy, net: &PolicyValueNet, alpha: f64, beta: f64, ent: f64) -> (LossParts, Gradients) {
        let mut rng = rngs::stream(0, "unused", &[]);
        let caches: Vec<NetCache> = t
            .states
            .iter()
            .map(|s| net.forward(s, Mode::Eval, &mut rng).unwrap())
            .collect();
        let inputs: Vec<LossInput<'_>> = (0..2)
            .map(|i| LossInput {
                cache: &caches[i],
                candidates: &t.candidates[i],
                action: t.actions[i],
                ret: t.returns[i],
            })
            .collect();
        let mut grads = net.params().zero_grads_like();
        let parts = actor_critic_loss(net, &inputs, alpha, beta, ent, &mut grads);
        (parts, grads)
    }

    /// The objective with the advantage's value term frozen at `frozen`.
    fn objective(t: &Toy, net: &PolicyValueNet, alpha: f64, beta: f64, ent: f64, frozen: &[f64]) -> f64 {
        let mut rng = rngs::stream(0, "unused", &[]);
        let mut total = 0.0;
        for i in 0..2 {
            let c = net.forward(&t.states[i], Mode::Eval, &mut rng).unwrap();
            let p = masked_softmax(&c.logits, &t.candidates[i]);
            let nlp = -p[t.actions[i]].ln();
            let h: f64 = t.candidates[i].iter().map(|&j| -p[j] * p[j].ln()).sum();
            let r = t.returns[i];
            total += (c.value - r).powi(2) + alpha * nlp * (r - frozen[i]) + beta * nlp * r - ent * h;
        }
        total / 2.0
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = toy();
        let (alpha, beta, ent) = (1.0, 0.1, 0.05);
        let (_, grads) = eval(&t, &t.net, alpha, beta, ent);
        let mut rng = rngs::stream(0, "unused", &[]);
        let frozen: Vec<f64> = t
            .states
            .iter()
            .map(|s| t.net.forward(s, Mode::Eval, &mut rng).unwrap().value)
            .collect();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for id in t.net.params().ids().collect::<Vec<ParamId>>() {
            for k in 0..t.net.params().get(id).len() {
                let mut plus = t.net.clone();
                plus.params_mut().get_mut(id).data_mut()[k] += h;
                let mut minus = t.net.clone();
                minus.params_mut().get_mut(id).data_mut()[k] -= h;
                let fd = (objective(&t, &plus, alpha, beta, ent, &frozen)
                    - objective(&t, &minus, alpha, beta, ent, &frozen))
                    / (2.0 * h);
                let an = grads.get(id).data()[k];
                let denom = fd.abs().max(an.abs());
                if denom > 1e-7 {
                    worst = worst.max((fd - an).abs() / denom);
                }
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn zero_weights_leave_policy_head_untouched() {
        let t = toy();
        let (parts, grads) = eval(&t, &t.net, 0.0, 0.0, 0.0);
        let pw = t.net.policy_head();
        assert!(grads.get(pw.w).data().iter().all(|&g| g == 0.0));
        assert!(grads.get(pw.b).data().iter().all(|&g| g == 0.0));
        assert_eq!(parts.total, parts.value);
    }

    #[test]
    fn value_head_gradient_ignores_alpha_and_beta() {
        let t = toy();
        let (_, plain) = eval(&t, &t.net, 0.0, 0.0, 0.0);
        let (_, full) = eval(&t, &t.net, 1.0, 0.1, 0.0);
        let vh = t.net.value_head();
        assert_eq!(plain.get(vh.w).data(), full.get(vh.w).data());
        assert_eq!(plain.get(vh.b).data(), full.get(vh.b).data());
    }

    #[test]
    fn perfect_critic_has_no_advantage_loss() {
        let t = toy();
        let mut rng = rngs::stream(0, "unused", &[]);
        let caches: Vec<NetCache> = t
            .states
            .iter()
            .map(|s| t.net.forward(s, Mode::Eval, &mut rng).unwrap())
            .collect();
        let inputs: Vec<LossInput<'_>> = (0..2)
            .map(|i| LossInput {
                cache: &caches[i],
                candidates: &t.candidates[i],
                action: t.actions[i],
                ret: caches[i].value,
            })
            .collect();
        let mut grads = t.net.params().zero_grads_like();
        let parts = actor_critic_loss(&t.net, &inputs, 1.0, 0.0, 0.0, &mut grads);
        assert_eq!(parts.policy, 0.0);
        assert_eq!(parts.value, 0.0);
    }
}
