//! One learning session driven by a recommender.

use super::baselines::{baseline_cn_random, baseline_cog, McsPlanner};
use super::net::{NetCache, PolicyValueNet};
use super::{build_state, compute_returns, AgentConfig};
use crate::error::{Error, Result};
use crate::graph::{ItemId, PrereqGraph};
use crate::kt::{DktModel, InteractionRecord};
use crate::nn::{masked_softmax, Mode};
use crate::rngs;
use crate::sim::{Environment, SessionStart};

/// Strategy choosing the next item.
#[derive(Debug, Clone, Copy)]
pub enum Recommender<'a> {
    Policy {
        net: &'a PolicyValueNet,
        /// Restrict actions to the navigation candidates.
        masked: bool,
        mode: Mode,
        greedy: bool,
    },
    CnRandom,
    Cog,
    Mcs(&'a McsPlanner),
}

impl Recommender<'_> {
    fn uses_navigation(&self) -> bool {
        match self {
            Recommender::Policy { masked, .. } => *masked,
            Recommender::CnRandom | Recommender::Cog => true,
            Recommender::Mcs(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub focus: Option<ItemId>,
    pub candidates: Vec<ItemId>,
    pub action: ItemId,
    pub score: u8,
    /// Policy distribution over all items (zero off the candidates);
    /// empty for baselines.
    pub probs: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    /// Forward activations, kept only for training.
    pub cache: Option<NetCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: SessionStart,
    pub steps: Vec<Step>,
    pub returns: Vec<f64>,
    pub e_end: f64,
    pub ep: f64,
}

impl Trajectory {
    pub fn path(&self) -> Vec<ItemId> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

/// Runs `cfg.path_len` recommendation steps on an environment that was just
/// reset with `start`, then ends the session.
///
/// Environment randomness (scores) comes from `env_rng`, recommender
/// randomness from `agent_rng`, so different recommenders facing the same
/// learner stay comparable. With `keep_cache` set, policy steps keep their
/// forward activations for a later backward pass.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    env: &mut dyn Environment,
    start: SessionStart,
    kt: &DktModel,
    graph: &PrereqGraph,
    recommender: Recommender<'_>,
    cfg: &AgentConfig,
    env_rng: &mut rngs::Rng,
    agent_rng: &mut rngs::Rng,
    keep_cache: bool,
) -> Result<Trajectory> {
    let m = env.num_items();
    if kt.num_items() != m || graph.num_items() != m {
        return Err(Error::Shape(format!(
            "environment has {m} items, KT model {}, graph {}",
            kt.num_items(),
            graph.num_items()
        )));
    }
    let target = start.target.clone();
    let mut trace = kt.state_after(&start.history)?;
    let mut history: Vec<InteractionRecord> = start.history.clone();
    let mut focus = start.history.last().map(|r| r.item);
    let all_items: Vec<ItemId> = (0..m).collect();
    let mut steps = Vec::with_capacity(cfg.path_len);

    for i in 0..cfg.path_len {
        let (used_focus, candidates) = if recommender.uses_navigation() {
            let (f, c) = graph.navigate(focus, &target, cfg.hops)?;
            (Some(f), c.into_iter().collect::<Vec<_>>())
        } else {
            (focus, all_items.clone())
        };
        let level = trace.level();
        let mut step = Step {
            focus: used_focus,
            candidates,
            action: 0,
            score: 0,
            probs: Vec::new(),
            log_prob: 0.0,
            value: 0.0,
            reward: 0.0,
            cache: None,
        };
        step.action = match recommender {
            Recommender::Policy { net, mode, greedy, .. } => {
                let state = build_state(level, &target, m)?;
                let out = net.act(&state, &step.candidates, mode, greedy, agent_rng)?;
                step.probs = out.probs;
                step.log_prob = out.log_prob;
                step.value = out.value;
                if keep_cache {
                    step.cache = Some(out.cache);
                }
                out.action
            }
            Recommender::CnRandom => baseline_cn_random(&step.candidates, agent_rng)?,
            Recommender::Cog => baseline_cog(&step.candidates, level, agent_rng)?,
            Recommender::Mcs(planner) => {
                planner.choose(kt, &trace, &target, cfg.path_len - i, agent_rng)?
            }
        };
        step.score = env.step(step.action, env_rng)?;
        let rec = InteractionRecord::new(step.action, step.score == 1);
        kt.observe(&mut trace, rec)?;
        history.push(rec);
        focus = Some(step.action);
        steps.push(step);
    }

    let outcome = env.end_session()?;
    if let Some(last) = steps.last_mut() {
        last.reward = outcome.ep;
    }
    let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
    let returns = compute_returns(&rewards, cfg.gamma);
    Ok(Trajectory {
        start,
        steps,
        returns,
        e_end: outcome.e_end,
        ep: outcome.ep,
    })
}

/// Recomputes the masked distribution from the logged logits and checks it
/// puts no mass outside the candidates. Returns the offending step index.
pub fn check_masking(traj: &Trajectory) -> std::result::Result<(), usize> {
    for (i, s) in traj.steps.iter().enumerate() {
        if !s.candidates.contains(&s.action) {
            return Err(i);
        }
        if let Some(cache) = &s.cache {
            let probs = masked_softmax(&cache.logits, &s.candidates);
            let off: f64 = (0..probs.len())
                .filter(|j| !s.candidates.contains(j))
                .map(|j| probs[j])
                .sum();
            if off != 0.0 {
                return Err(i);
            }
        }
        if !s.probs.is_empty() {
            let off = (0..s.probs.len()).any(|j| !s.candidates.contains(&j) && s.probs[j] != 0.0);
            if off {
                return Err(i);
            }
        }
    }
    Ok(())
}

/// Draws a fresh session and plays it; `seed` and `episode` select the
/// named streams, so the same learner appears for every recommender.
#[allow(clippy::too_many_arguments)]
pub fn play_seeded(
    env: &mut dyn Environment,
    kt: &DktModel,
    graph: &PrereqGraph,
    recommender: Recommender<'_>,
    cfg: &AgentConfig,
    seed: u64,
    episode: u64,
    keep_cache: bool,
) -> Result<Trajectory> {
    let mut env_rng = rngs::stream(seed, "env", &[episode]);
    let mut agent_rng = rngs::stream(seed, "agent", &[episode]);
    let start = env.reset(&mut env_rng)?;
    run_episode(env, start, kt, graph, recommender, cfg, &mut env_rng, &mut agent_rng, keep_cache)
}
