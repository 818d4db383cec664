//! Non-learning recommenders.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::net::argmax;
use crate::error::{Error, Result};
use crate::graph::{ItemId, TargetSet};
use crate::kt::{DktModel, InteractionRecord, KnowledgeLevel, TraceState};

/// Uniform pick among the candidates.
pub fn baseline_cn_random<R: Rng + ?Sized>(candidates: &[ItemId], rng: &mut R) -> Result<ItemId> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(candidates[rng.gen_range(0..candidates.len())])
}

/// Samples a candidate with weight `1 - S_j`; uniform if every weight is 0.
pub fn baseline_cog<R: Rng + ?Sized>(
    candidates: &[ItemId],
    knowledge: &KnowledgeLevel,
    rng: &mut R,
) -> Result<ItemId> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let weights: Vec<f64> = candidates
        .iter()
        .map(|&c| (1.0 - knowledge.get(c)).max(0.0))
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return baseline_cn_random(candidates, rng);
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (&c, &w) in candidates.iter().zip(&weights) {
        acc += w;
        if u < acc {
            return Ok(c);
        }
    }
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(candidates.len() - 1);
    Ok(candidates[last])
}

/// Monte Carlo search using the KT model as a surrogate learner.
///
/// Every rollout answers correctly. Counts KT forward steps so the cost of
/// different rollout budgets can be compared.
#[derive(Debug)]
pub struct McsPlanner {
    rollouts: usize,
    forward_passes: AtomicU64,
}

impl McsPlanner {
    pub fn new(rollouts: usize) -> Result<Self> {
        if rollouts == 0 {
            return Err(Error::InvalidArgument("rollouts must be positive".into()));
        }
        Ok(McsPlanner {
            rollouts,
            forward_passes: AtomicU64::new(0),
        })
    }

    pub fn rollouts(&self) -> usize {
        self.rollouts
    }

    pub fn forward_passes(&self) -> u64 {
        self.forward_passes.load(Ordering::Relaxed)
    }

    /// Best next item when `remaining` steps are left (the chosen item
    /// included). Ties go to the lowest id.
    pub fn choose<R: Rng + ?Sized>(
        &self,
        kt: &DktModel,
        trace: &TraceState,
        target: &TargetSet,
        remaining: usize,
        rng: &mut R,
    ) -> Result<ItemId> {
        let m = kt.num_items();
        target.validate(m)?;
        let remaining = remaining.max(1);
        let current = target_mean(trace.level(), target);
        let mut scores = vec![0.0; m];
        let mut passes = 0u64;
        for (item, score) in scores.iter_mut().enumerate() {
            let mut total = 0.0;
            for _ in 0..self.rollouts {
                let mut state = trace.clone();
                kt.observe(&mut state, InteractionRecord::new(item, true))?;
                for _ in 1..remaining {
                    let next = rng.gen_range(0..m);
                    kt.observe(&mut state, InteractionRecord::new(next, true))?;
                }
                passes += remaining as u64;
                total += target_mean(state.level(), target) - current;
            }
            *score = total / self.rollouts as f64;
        }
        self.forward_passes.fetch_add(passes, Ordering::Relaxed);
        let all: Vec<ItemId> = (0..m).collect();
        Ok(argmax(&all, &scores))
    }
}

fn target_mean(level: &KnowledgeLevel, target: &TargetSet) -> f64 {
    target.iter().map(|t| level.get(t)).sum::<f64>() / target.len() as f64
}

/// Plans a whole path of length `n` against the KT surrogate alone,
/// assuming every recommended item is answered correctly.
pub fn baseline_mcs<R: Rng + ?Sized>(
    kt: &DktModel,
    target: &TargetSet,
    history: &[InteractionRecord],
    planner: &McsPlanner,
    n: usize,
    rng: &mut R,
) -> Result<Vec<ItemId>> {
    let mut trace = kt.state_after(history)?;
    let mut path = Vec::with_capacity(n);
    for i in 0..n {
        let item = planner.choose(kt, &trace, target, n - i, rng)?;
        kt.observe(&mut trace, InteractionRecord::new(item, true))?;
        path.push(item);
    }
    Ok(path)
}
