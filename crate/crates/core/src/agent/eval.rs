//! Evaluation over a fixed set of seeded sessions.

use rayon::prelude::*;
use serde::Serialize;

use super::baselines::McsPlanner;
use super::episode::{play_seeded, Recommender};
use super::net::PolicyValueNet;
use super::{AgentConfig, Method};
use crate::error::{Error, Result};
use crate::graph::{ItemId, PrereqGraph};
use crate::kt::DktModel;
use crate::metrics::{bootstrap_ci, mean, stderr};
use crate::nn::Mode;
use crate::rngs;

use super::train::EnvFactory;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub target: Vec<ItemId>,
    pub e_start: f64,
    pub e_end: f64,
    pub e_sup: f64,
    pub ep: f64,
    pub path: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: String,
    pub episodes: Vec<EpisodeResult>,
    pub mean: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// KT forward steps spent planning (MCS only).
    pub kt_forward_passes: u64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Plays `episodes` sessions with `method`. Session `e` draws its learner
/// and target from a stream keyed only by `cfg.seed` and `e`, so every
/// method is scored on the same sessions.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    method: Method,
    net: Option<&PolicyValueNet>,
    env_factory: &EnvFactory<'_>,
    kt: &DktModel,
    graph: &PrereqGraph,
    cfg: &AgentConfig,
    episodes: usize,
    greedy: bool,
) -> Result<EvalReport> {
    cfg.validate()?;
    let planner = match method {
        Method::Mcs(r) => Some(McsPlanner::new(r)?),
        _ => None,
    };
    let recommender = match method {
        Method::Cseal | Method::CsealNcn => Recommender::Policy {
            net: net.ok_or_else(|| Error::InvalidArgument(format!("{method} needs a trained policy")))?,
            masked: method == Method::Cseal,
            mode: Mode::Eval,
            greedy,
        },
        Method::CnRandom => Recommender::CnRandom,
        Method::Cog => Recommender::Cog,
        Method::Mcs(_) => Recommender::Mcs(planner.as_ref().expect("planner built above")),
    };
    let eval_seed = rngs::derive_seed(cfg.seed, "eval", &[]);
    let results: Vec<EpisodeResult> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut env = env_factory()?;
            let t = play_seeded(env.as_mut(), kt, graph, recommender, cfg, eval_seed, e as u64, false)?;
            Ok(EpisodeResult {
                episode: e,
                target: t.start.target.iter().collect(),
                e_start: t.start.e_start,
                e_end: t.e_end,
                e_sup: t.start.e_sup,
                ep: t.ep,
                path: t.path(),
            })
        })
        .collect::<Result<_>>()?;
    let eps: Vec<f64> = results.iter().map(|r| r.ep).collect();
    let mut rng = rngs::stream(cfg.seed, "bootstrap", &[]);
    let (ci_low, ci_high) = if eps.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        bootstrap_ci(&eps, 0.95, BOOTSTRAP_RESAMPLES, &mut rng)
    };
    Ok(EvalReport {
        method: method.to_string(),
        mean: mean(&eps),
        stderr: stderr(&eps),
        ci_low,
        ci_high,
        kt_forward_passes: planner.map_or(0, |p| p.forward_passes()),
        episodes: results,
    })
}
