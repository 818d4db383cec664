//! Rule-based knowledge-structure simulator.
//!
//! Hidden mastery `theta_v` lives in [0, 1] and maps to IRT ability
//! `6 theta - 3`. Item difficulty grows with longest-path depth in the
//! prerequisite graph. Practicing `v` raises its mastery by
//! `g_max * gate(v) * (1 - theta_v)`, where the gate opens linearly as the
//! weakest prerequisite approaches `tau`.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use super::{bernoulli, irt_prob, EnvSession, Environment, IrtItemParams, SessionOutcome, SessionStart};
use crate::error::{Error, Result};
use crate::graph::{ItemId, PrereqGraph, TargetSet};
use crate::rngs;

#[derive(Debug, Clone, PartialEq)]
pub struct KssConfig {
    pub g_max: f64,
    pub tau: f64,
    /// Upper bound of the uniform raw initial mastery.
    pub init_max: f64,
    pub skip_threshold: f64,
    pub discrimination: f64,
    pub guessing: f64,
    pub max_target: usize,
    /// Per-item difficulty overrides; `None` derives difficulty from depth.
    pub difficulty: Option<Vec<f64>>,
}

impl Default for KssConfig {
    fn default() -> Self {
        KssConfig {
            g_max: 0.3,
            tau: 0.6,
            init_max: 0.6,
            skip_threshold: 0.9,
            discrimination: 1.0,
            guessing: 0.1,
            max_target: 3,
            difficulty: None,
        }
    }
}

/// IRT ability on the conventional [-3, 3] scale.
pub fn ability(theta: f64) -> f64 {
    6.0 * theta - 3.0
}

/// Ground-truth learner state.
#[derive(Debug, Clone, PartialEq)]
pub struct KssLearner {
    pub mastery: Vec<f64>,
}

impl KssLearner {
    /// Prerequisite gate in [0, 1]: 1 for roots, otherwise
    /// `min(1, min_prereq_mastery / tau)`.
    pub fn gate(&self, item: ItemId, graph: &PrereqGraph, tau: f64) -> f64 {
        let preds = graph.predecessors(item);
        if preds.is_empty() {
            return 1.0;
        }
        let weakest = preds
            .iter()
            .map(|&u| self.mastery[u])
            .fold(f64::INFINITY, f64::min);
        (weakest / tau).min(1.0)
    }

    /// Applies one practice of `item`; returns the mastery gain.
    pub fn practice(&mut self, item: ItemId, graph: &PrereqGraph, cfg: &KssConfig) -> f64 {
        let gain = cfg.g_max * self.gate(item, graph, cfg.tau) * (1.0 - self.mastery[item]);
        self.mastery[item] = (self.mastery[item] + gain).min(1.0);
        gain
    }
}

#[derive(Debug, Clone)]
pub struct KssEnv {
    graph: Arc<PrereqGraph>,
    items: Vec<IrtItemParams>,
    cfg: KssConfig,
    learner: Option<KssLearner>,
    session: Option<EnvSession>,
}

impl KssEnv {
    pub fn new(graph: Arc<PrereqGraph>, cfg: KssConfig) -> Result<Self> {
        let m = graph.num_items();
        if m == 0 {
            return Err(Error::InvalidArgument("KSS needs a non-empty graph".into()));
        }
        let difficulty = match &cfg.difficulty {
            Some(d) if d.len() == m => d.clone(),
            Some(d) => {
                return Err(Error::InvalidArgument(format!(
                    "{} difficulty overrides for {m} items",
                    d.len()
                )))
            }
            None => {
                let depth = graph.depths();
                let max_depth = depth.iter().copied().max().unwrap_or(0).max(1) as f64;
                depth
                    .iter()
                    .map(|&d| -3.0 + 6.0 * d as f64 / max_depth)
                    .collect()
            }
        };
        if !(cfg.discrimination > 0.0) || !(0.0..1.0).contains(&cfg.guessing) {
            return Err(Error::InvalidArgument("invalid IRT parameters".into()));
        }
        let items = difficulty
            .into_iter()
            .map(|b| IrtItemParams::new(cfg.discrimination, b, cfg.guessing))
            .collect();
        Ok(KssEnv {
            graph,
            items,
            cfg,
            learner: None,
            session: None,
        })
    }

    pub fn graph(&self) -> &PrereqGraph {
        &self.graph
    }

    pub fn config(&self) -> &KssConfig {
        &self.cfg
    }

    pub fn item_params(&self, item: ItemId) -> &IrtItemParams {
        &self.items[item]
    }

    pub fn learner(&self) -> Option<&KssLearner> {
        self.learner.as_ref()
    }

    /// Replaces the hidden learner and target; used by scripted tests.
    pub fn set_learner(&mut self, learner: KssLearner, target: TargetSet) -> Result<SessionStart> {
        target.validate(self.graph.num_items())?;
        let e_start = self.exam_for(&learner, &target);
        let e_sup = target.len() as f64;
        self.learner = Some(learner);
        self.session = Some(EnvSession::new(target.clone(), e_start, e_sup));
        Ok(SessionStart {
            target,
            history: Vec::new(),
            e_start,
            e_sup,
        })
    }

    /// Structurally consistent novice: in topological order each mastery is
    /// `min(Uniform(0, init_max), min over prerequisites)`.
    pub fn sample_learner<R: Rng + ?Sized>(&self, rng: &mut R) -> KssLearner {
        let m = self.graph.num_items();
        let mut mastery = vec![0.0; m];
        for v in self.graph.topological_order().expect("acyclic graph") {
            let raw = rng.gen_range(0.0..self.cfg.init_max);
            mastery[v] = self
                .graph
                .predecessors(v)
                .iter()
                .map(|&u| mastery[u])
                .fold(raw, f64::min);
        }
        KssLearner { mastery }
    }

    pub fn sample_target<R: Rng + ?Sized>(&self, rng: &mut R) -> TargetSet {
        let m = self.graph.num_items();
        let size = rng.gen_range(1..=self.cfg.max_target.min(m).max(1));
        TargetSet::new(sample(rng, m, size).into_iter()).expect("size >= 1")
    }

    /// Expected exam score: sum of correctness probabilities over targets.
    pub fn exam_for(&self, learner: &KssLearner, target: &TargetSet) -> f64 {
        target
            .iter()
            .map(|t| irt_prob(ability(learner.mastery[t]), &self.items[t]))
            .sum()
    }

    pub fn correct_prob(&self, learner: &KssLearner, item: ItemId) -> f64 {
        irt_prob(ability(learner.mastery[item]), &self.items[item])
    }

    /// Samples a learner and target, resampling both while the begin exam is
    /// at or above the skip threshold.
    pub fn sample_session<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(KssLearner, TargetSet, f64, f64)> {
        for _ in 0..100_000 {
            let learner = self.sample_learner(rng);
            let target = self.sample_target(rng);
            let e_start = self.exam_for(&learner, &target);
            let e_sup = target.len() as f64;
            if e_start / e_sup < self.cfg.skip_threshold {
                return Ok((learner, target, e_start, e_sup));
            }
        }
        Err(Error::Session(
            "could not sample a learner below the skip threshold".into(),
        ))
    }
}

impl Environment for KssEnv {
    fn num_items(&self) -> usize {
        self.graph.num_items()
    }

    fn reset(&mut self, rng: &mut rngs::Rng) -> Result<SessionStart> {
        let (learner, target, e_start, e_sup) = self.sample_session(rng)?;
        self.learner = Some(learner);
        self.session = Some(EnvSession::new(target.clone(), e_start, e_sup));
        Ok(SessionStart {
            target,
            history: Vec::new(),
            e_start,
            e_sup,
        })
    }

    fn step(&mut self, item: ItemId, rng: &mut rngs::Rng) -> Result<u8> {
        self.graph.check_item(item)?;
        let session = EnvSession::active(&mut self.session)?;
        session.step_count += 1;
        let learner = self.learner.as_mut().expect("learner exists with session");
        let p = irt_prob(ability(learner.mastery[item]), &self.items[item]);
        let score = bernoulli(p, rng);
        learner.practice(item, &self.graph, &self.cfg);
        Ok(score)
    }

    fn exam(&self) -> Result<f64> {
        match (&self.learner, &self.session) {
            (Some(l), Some(s)) => Ok(self.exam_for(l, &s.target)),
            _ => Err(Error::Session("no session started".into())),
        }
    }

    fn end_session(&mut self) -> Result<SessionOutcome> {
        let e_end = self.exam()?;
        EnvSession::finish(&mut self.session, e_end)
    }

    fn session(&self) -> Option<&EnvSession> {
        self.session.as_ref()
    }
}
