//! Actor-critic recommender, episode loop, training and baselines.

mod baselines;
mod episode;
mod eval;
mod loss;
mod net;
mod train;

pub use baselines::{baseline_cn_random, baseline_cog, baseline_mcs, McsPlanner};
pub use episode::{check_masking, play_seeded, run_episode, Recommender, Step, Trajectory};
pub use eval::{evaluate, EpisodeResult, EvalReport, BOOTSTRAP_RESAMPLES};
pub use loss::{actor_critic_loss, LossInput, LossParts};
pub use net::{ActOutput, NetCache, PolicyValueNet};
pub use train::{train, EnvFactory, EpochLog, TrainOutcome};

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::TargetSet;
use crate::kt::KnowledgeLevel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub path_len: usize,
    pub lr: f64,
    pub entropy_weight: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub hidden: [usize; 2],
    pub dropout: f64,
    pub hops: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            alpha: 1.0,
            beta: 0.1,
            path_len: 20,
            lr: 5e-3,
            entropy_weight: 0.0,
            batch_size: 16,
            epochs: 312,
            clip_norm: 5.0,
            hidden: [128, 32],
            dropout: 0.0,
            hops: crate::graph::DEFAULT_HOPS,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.path_len == 0 || self.batch_size == 0 || self.hops == 0 {
            return Err(Error::InvalidArgument(
                "path length, batch size and hops must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Recommendation strategies that can be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Cseal,
    /// The learned policy without candidate masking.
    CsealNcn,
    CnRandom,
    Cog,
    /// KT-guided Monte Carlo search with the given rollouts per item.
    Mcs(usize),
}

impl Method {
    pub fn is_trainable(self) -> bool {
        matches!(self, Method::Cseal | Method::CsealNcn)
    }

    pub fn uses_navigation(self) -> bool {
        matches!(self, Method::Cseal | Method::CnRandom | Method::Cog)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Cseal => f.write_str("cseal"),
            Method::CsealNcn => f.write_str("cseal-ncn"),
            Method::CnRandom => f.write_str("cn-random"),
            Method::Cog => f.write_str("cog"),
            Method::Mcs(n) => write!(f, "mcs-{n}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cseal" => Ok(Method::Cseal),
            "cseal-ncn" => Ok(Method::CsealNcn),
            "cn-random" => Ok(Method::CnRandom),
            "cog" => Ok(Method::Cog),
            other => other
                .strip_prefix("mcs-")
                .and_then(|n| n.parse().ok())
                .filter(|&n: &usize| n > 0)
                .map(Method::Mcs)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// Concatenation of the knowledge level and the one-hot target.
pub fn build_state(knowledge: &KnowledgeLevel, target: &TargetSet, num_items: usize) -> Result<Vec<f64>> {
    if knowledge.len() != num_items {
        return Err(Error::Shape(format!(
            "knowledge level has {} entries, expected {num_items}",
            knowledge.len()
        )));
    }
    target.validate(num_items)?;
    let mut state = Vec::with_capacity(2 * num_items);
    state.extend_from_slice(knowledge.values());
    state.extend((0..num_items).map(|j| if target.contains(j) { 1.0 } else { 0.0 }));
    Ok(state)
}

/// Discounted returns `R_i = sum_{j >= i} gamma^(j - i) r_j`.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}
