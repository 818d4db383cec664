//! DKT-driven knowledge-evolution simulator.
//!
//! A trained DKT acts as the learner: the probability it assigns to an item
//! is that item's mastery, observed scores are Bernoulli draws from it, and
//! each practiced record is appended to the learner's history.

use std::sync::Arc;

use rand::Rng;

use super::{bernoulli, EnvSession, Environment, SessionOutcome, SessionStart};
use crate::data::KesEpisodeSpec;
use crate::error::{Error, Result};
use crate::graph::{ItemId, TargetSet};
use crate::kt::{DktModel, InteractionRecord, TraceState};
use crate::rngs;

#[derive(Debug, Clone, PartialEq)]
pub struct KesConfig {
    pub skip_threshold: f64,
}

impl Default for KesConfig {
    fn default() -> Self {
        KesConfig { skip_threshold: 0.9 }
    }
}

#[derive(Debug, Clone)]
pub struct KesLearner {
    model: Arc<DktModel>,
    history: Vec<InteractionRecord>,
    state: TraceState,
}

impl KesLearner {
    pub fn history(&self) -> &[InteractionRecord] {
        &self.history
    }

    /// Current correctness probability of `item`.
    pub fn mastery(&self, item: ItemId) -> f64 {
        self.state.level().get(item)
    }

    pub fn exam(&self, target: &TargetSet) -> f64 {
        target.iter().map(|t| self.mastery(t)).sum()
    }

    /// Samples a score for `item` and appends it to the history.
    pub fn practice<R: Rng + ?Sized>(&mut self, item: ItemId, rng: &mut R) -> Result<u8> {
        let p = self.mastery(item);
        let score = bernoulli(p, rng);
        let rec = InteractionRecord { item, score };
        self.model.observe(&mut self.state, rec)?;
        self.history.push(rec);
        Ok(score)
    }
}

#[derive(Debug, Clone)]
pub enum KesStart {
    Ready {
        learner: KesLearner,
        e_start: f64,
        e_sup: f64,
    },
    /// The learner already masters the target.
    Skip { e_start: f64, e_sup: f64 },
}

/// Seeds a learner with `init_records` and runs the begin exam.
pub fn kes_reset(
    model: Arc<DktModel>,
    init_records: &[InteractionRecord],
    target: &TargetSet,
    skip_threshold: f64,
) -> Result<KesStart> {
    if init_records.is_empty() {
        return Err(Error::InvalidArgument(
            "KES learners need at least one initialization record".into(),
        ));
    }
    target.validate(model.num_items())?;
    let state = model.state_after(init_records)?;
    let learner = KesLearner {
        model,
        history: init_records.to_vec(),
        state,
    };
    let e_start = learner.exam(target);
    let e_sup = target.len() as f64;
    if e_start / e_sup >= skip_threshold {
        return Ok(KesStart::Skip { e_start, e_sup });
    }
    Ok(KesStart::Ready {
        learner,
        e_start,
        e_sup,
    })
}

#[derive(Debug, Clone)]
pub struct KesEnv {
    model: Arc<DktModel>,
    episodes: Arc<Vec<KesEpisodeSpec>>,
    cfg: KesConfig,
    learner: Option<KesLearner>,
    session: Option<EnvSession>,
}

impl KesEnv {
    pub fn new(model: Arc<DktModel>, episodes: Arc<Vec<KesEpisodeSpec>>, cfg: KesConfig) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::InvalidArgument("KES needs at least one episode spec".into()));
        }
        for ep in episodes.iter() {
            ep.target.validate(model.num_items())?;
        }
        Ok(KesEnv {
            model,
            episodes,
            cfg,
            learner: None,
            session: None,
        })
    }

    pub fn learner(&self) -> Option<&KesLearner> {
        self.learner.as_ref()
    }
}

impl Environment for KesEnv {
    fn num_items(&self) -> usize {
        self.model.num_items()
    }

    /// Draws episode specs uniformly until one is below the skip threshold.
    fn reset(&mut self, rng: &mut rngs::Rng) -> Result<SessionStart> {
        let attempts = 20 * self.episodes.len().max(50);
        for _ in 0..attempts {
            let spec = &self.episodes[rng.gen_range(0..self.episodes.len())];
            match kes_reset(
                Arc::clone(&self.model),
                &spec.init_records,
                &spec.target,
                self.cfg.skip_threshold,
            )? {
                KesStart::Skip { .. } => continue,
                KesStart::Ready {
                    learner,
                    e_start,
                    e_sup,
                } => {
                    let start = SessionStart {
                        target: spec.target.clone(),
                        history: learner.history().to_vec(),
                        e_start,
                        e_sup,
                    };
                    self.learner = Some(learner);
                    self.session = Some(EnvSession::new(spec.target.clone(), e_start, e_sup));
                    return Ok(start);
                }
            }
        }
        Err(Error::Session(
            "every sampled KES episode already masters its target".into(),
        ))
    }

    fn step(&mut self, item: ItemId, rng: &mut rngs::Rng) -> Result<u8> {
        if item >= self.model.num_items() {
            return Err(Error::ItemOutOfRange {
                item,
                num_items: self.model.num_items(),
            });
        }
        let session = EnvSession::active(&mut self.session)?;
        session.step_count += 1;
        self.learner
            .as_mut()
            .expect("learner exists with session")
            .practice(item, rng)
    }

    fn exam(&self) -> Result<f64> {
        match (&self.learner, &self.session) {
            (Some(l), Some(s)) => Ok(l.exam(&s.target)),
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

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(item: ItemId, score: u8) -> InteractionRecord {
        InteractionRecord { item, score }
    }

    fn model() -> Arc<DktModel> {
        Arc::new(DktModel::new(6, 4, 8, 5))
    }

    #[test]
    fn reset_contract() {
        let m = model();
        let target = TargetSet::new([1, 4]).unwrap();
        let init = [rec(0, 1), rec(1, 0), rec(2, 1)];
        let a = kes_reset(Arc::clone(&m), &init, &target, 1.01).unwrap();
        let b = kes_reset(Arc::clone(&m), &init, &target, 1.01).unwrap();
        match (a, b) {
            (
                KesStart::Ready { learner, e_start, e_sup },
                KesStart::Ready { e_start: e2, .. },
            ) => {
                assert_eq!(e_sup, 2.0);
                assert!(e_start > 0.0 && e_start < 2.0);
                assert_eq!(e_start, e2);
                assert_eq!(learner.history(), &init);
            }
            _ => panic!("threshold above 1 never skips"),
        }
        assert!(matches!(
            kes_reset(Arc::clone(&m), &init, &target, 0.0).unwrap(),
            KesStart::Skip { .. }
        ));
        assert!(kes_reset(m, &[], &target, 0.9).is_err());
    }

    #[test]
    fn steps_grow_history_by_one() {
        let m = model();
        let specs = Arc::new(vec![KesEpisodeSpec {
            session_id: "s".into(),
            init_records: vec![rec(0, 1), rec(3, 0)],
            target: TargetSet::new([5]).unwrap(),
        }]);
        let mut env = KesEnv::new(m, specs, KesConfig { skip_threshold: 1.01 }).unwrap();
        let mut rng = rngs::stream(0, "kes", &[]);
        env.reset(&mut rng).unwrap();
        for k in 0..5 {
            let before = env.learner().unwrap().history().len();
            env.step(k % 6, &mut rng).unwrap();
            assert_eq!(env.learner().unwrap().history().len(), before + 1);
        }
        let out = env.end_session().unwrap();
        assert!(out.ep <= 1.0);
        assert!(env.end_session().is_err());
    }

    #[test]
    fn seeded_scores_are_bernoulli_draws() {
        let m = model();
        let init = [rec(2, 1)];
        let target = TargetSet::new([0]).unwrap();
        let KesStart::Ready { learner, .. } = kes_reset(m, &init, &target, 1.01).unwrap() else {
            panic!("no skip")
        };
        let p = learner.mastery(4);
        let mut l1 = learner.clone();
        let mut rng = rngs::stream(11, "draw", &[]);
        let s = l1.practice(4, &mut rng).unwrap();
        let mut rng = rngs::stream(11, "draw", &[]);
        let u: f64 = rng.gen();
        assert_eq!(s, (u < p) as u8);
    }

    #[test]
    fn bernoulli_frequency() {
        let mut rng = rngs::stream(12, "freq", &[]);
        let hits: u32 = (0..1000).map(|_| super::super::bernoulli(0.7, &mut rng) as u32).sum();
        let freq = hits as f64 / 1000.0;
        assert!((freq - 0.7).abs() < 0.03, "{freq}");
    }
}
