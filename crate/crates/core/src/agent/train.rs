//! Batched actor-critic training against a simulator.

use rayon::prelude::*;
use serde::Serialize;

use super::episode::{play_seeded, Recommender, Trajectory};
use super::loss::{actor_critic_loss, LossInput, LossParts};
use super::net::PolicyValueNet;
use super::AgentConfig;
use crate::error::{Error, Result};
use crate::graph::PrereqGraph;
use crate::kt::DktModel;
use crate::nn::{clip_gradients, Gradients, Mode, Optimizer};
use crate::rngs;
use crate::sim::Environment;

/// Builds an independent environment for one worker.
pub type EnvFactory<'a> = dyn Fn() -> Result<Box<dyn Environment>> + Sync + 'a;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub episodes: usize,
    pub mean_return: f64,
    pub loss: LossParts,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub curve: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn returns(&self) -> Vec<f64> {
        self.curve.iter().map(|e| e.mean_return).collect()
    }
}

/// Trains `net` in place. Each epoch plays `cfg.batch_size` episodes in
/// parallel with a read-only copy of the parameters, then takes one
/// clipped optimizer step on the mean per-step loss. The KT model is only
/// read. `on_epoch` sees every log entry as it is produced.
#[allow(clippy::too_many_arguments)]
pub fn train(
    net: &mut PolicyValueNet,
    env_factory: &EnvFactory<'_>,
    kt: &DktModel,
    graph: &PrereqGraph,
    masked: bool,
    cfg: &AgentConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if net.num_items() != kt.num_items() {
        return Err(Error::Shape("policy and KT model disagree on item count".into()));
    }
    let train_seed = rngs::derive_seed(cfg.seed, "train", &[]);
    let mut opt = Optimizer::adam(cfg.lr, net.params());
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let snapshot: &PolicyValueNet = net;
        let recommender = Recommender::Policy {
            net: snapshot,
            masked,
            mode: Mode::Train,
            greedy: false,
        };
        let trajectories: Vec<Trajectory> = (0..cfg.batch_size)
            .into_par_iter()
            .map(|b| {
                let mut env = env_factory()?;
                let episode = (epoch * cfg.batch_size + b) as u64;
                play_seeded(env.as_mut(), kt, graph, recommender, cfg, train_seed, episode, true)
            })
            .collect::<Result<_>>()?;

        let total_steps: usize = trajectories.iter().map(|t| t.steps.len()).sum();
        let per_traj: Vec<(LossParts, Gradients)> = trajectories
            .par_iter()
            .map(|t| {
                let inputs: Vec<LossInput<'_>> = t
                    .steps
                    .iter()
                    .zip(&t.returns)
                    .map(|(s, &ret)| LossInput {
                        cache: s.cache.as_ref().expect("training keeps caches"),
                        candidates: &s.candidates,
                        action: s.action,
                        ret,
                    })
                    .collect();
                let mut grads = snapshot.params().zero_grads_like();
                let parts = actor_critic_loss(snapshot, &inputs, cfg.alpha, cfg.beta, cfg.entropy_weight, &mut grads);
                (parts, grads)
            })
            .collect();

        // Each trajectory's loss is a mean over its own steps; reweight so the
        // batch loss is the mean over all steps.
        let mut grads = net.params().zero_grads_like();
        let mut loss = LossParts::default();
        for ((parts, g), t) in per_traj.iter().zip(&trajectories) {
            let w = t.steps.len() as f64 / total_steps as f64;
            let mut g = g.clone();
            g.scale(w);
            grads.add(&g);
            loss.value += w * parts.value;
            loss.policy += w * parts.policy;
            loss.enhanced += w * parts.enhanced;
            loss.entropy += w * parts.entropy;
            loss.total += w * parts.total;
        }
        let grad_norm = grads.norm();
        if !grad_norm.is_finite() || !loss.total.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss or gradient at epoch {epoch}")));
        }
        net.params_mut().zero_grad();
        net.params_mut().accumulate(&grads);
        clip_gradients(net.params_mut(), cfg.clip_norm);
        opt.step(net.params_mut());
        if !net.params().all_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after epoch {epoch}")));
        }

        let mean_return = trajectories.iter().map(|t| t.ep).sum::<f64>() / trajectories.len() as f64;
        let log = EpochLog {
            epoch,
            episodes: trajectories.len(),
            mean_return,
            loss,
            grad_norm,
        };
        on_epoch(&log);
        curve.push(log);
    }
    Ok(TrainOutcome { curve })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::graph::default_kss_graph;
    use crate::sim::{KssConfig, KssEnv};

    fn run(seed: u64) -> (TrainOutcome, PolicyValueNet, DktModel, DktModel) {
        let graph = Arc::new(default_kss_graph());
        let factory = {
            let graph = graph.clone();
            move || -> Result<Box<dyn Environment>> { Ok(Box::new(KssEnv::new(graph.clone(), KssConfig::default())?)) }
        };
        let kt = DktModel::new(10, 4, 6, 3);
        let before = kt.clone();
        let mut net = PolicyValueNet::new(10, [16, 8], 0.1, seed);
        let cfg = AgentConfig { epochs: 3, batch_size: 4, lr: 1e-3, seed, ..AgentConfig::default() };
        let mut seen = 0;
        let out = train(&mut net, &factory, &kt, &graph, true, &cfg, |_| seen += 1).unwrap();
        assert_eq!(seen, 3);
        (out, net, kt, before)
    }

    #[test]
    fn curve_has_one_entry_per_epoch_and_kt_is_frozen() {
        let (out, _, kt, before) = run(1);
        assert_eq!(out.curve.len(), 3);
        assert!(out.curve.iter().all(|e| e.episodes == 4 && e.mean_return.is_finite()));
        assert_eq!(kt, before);
    }

    #[test]
    fn training_is_deterministic() {
        let (a, na, _, _) = run(5);
        let (b, nb, _, _) = run(5);
        assert_eq!(a, b);
        assert_eq!(na, nb);
    }
}
