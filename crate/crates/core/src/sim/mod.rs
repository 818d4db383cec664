//! Learner simulators.
//!
//! Both environments follow the same session contract: [`Environment::reset`]
//! starts a session (begin exam included), [`Environment::step`] practices
//! one item and reports the observed score, and
//! [`Environment::end_session`] runs the end exam and returns the session
//! effectiveness.

mod irt;
mod kes;
mod kss;
mod synth;

pub use irt::{irt_prob, IrtItemParams, IRT_D};
pub use kes::{kes_reset, KesConfig, KesEnv, KesLearner, KesStart};
pub use kss::{KssConfig, KssEnv, KssLearner};
pub use synth::generate_synthetic_logs;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{ItemId, TargetSet};
use crate::kt::InteractionRecord;
use crate::rngs;

/// Normalized exam promotion `(E_e - E_s) / (E_sup - E_s)`.
pub fn ep_score(e_start: f64, e_end: f64, e_sup: f64) -> Result<f64> {
    if e_sup <= e_start {
        return Err(Error::InvalidArgument(format!(
            "full score {e_sup} must exceed the begin-exam score {e_start}"
        )));
    }
    Ok((e_end - e_start) / (e_sup - e_start))
}

/// What the agent learns when a session starts.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionStart {
    pub target: TargetSet,
    /// Records observed before the session (empty for KSS).
    pub history: Vec<InteractionRecord>,
    pub e_start: f64,
    pub e_sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionOutcome {
    pub e_end: f64,
    pub ep: f64,
}

/// Bookkeeping shared by both simulators.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSession {
    pub target: TargetSet,
    pub step_count: usize,
    pub e_start: f64,
    pub e_sup: f64,
    pub done: bool,
}

impl EnvSession {
    fn new(target: TargetSet, e_start: f64, e_sup: f64) -> Self {
        debug_assert!(e_sup > 0.0 && (0.0..=e_sup).contains(&e_start));
        EnvSession {
            target,
            step_count: 0,
            e_start,
            e_sup,
            done: false,
        }
    }

    fn active(session: &mut Option<EnvSession>) -> Result<&mut EnvSession> {
        match session {
            Some(s) if !s.done => Ok(s),
            Some(_) => Err(Error::Session("session already ended".into())),
            None => Err(Error::Session("no session started; call reset first".into())),
        }
    }

    fn finish(session: &mut Option<EnvSession>, e_end: f64) -> Result<SessionOutcome> {
        let s = Self::active(session)?;
        s.done = true;
        Ok(SessionOutcome {
            e_end,
            ep: ep_score(s.e_start, e_end, s.e_sup)?,
        })
    }
}

pub trait Environment: Send {
    fn num_items(&self) -> usize;

    /// Starts a fresh session; learners who already master the target are
    /// resampled internally.
    fn reset(&mut self, rng: &mut rngs::Rng) -> Result<SessionStart>;

    /// Practices `item` and returns the observed 0/1 score.
    fn step(&mut self, item: ItemId, rng: &mut rngs::Rng) -> Result<u8>;

    /// Deterministic exam score of the current learner on the target.
    fn exam(&self) -> Result<f64>;

    /// Runs the end exam and closes the session.
    fn end_session(&mut self) -> Result<SessionOutcome>;

    fn session(&self) -> Option<&EnvSession>;
}

fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u8 {
    (rng.gen::<f64>() < p) as u8
}
