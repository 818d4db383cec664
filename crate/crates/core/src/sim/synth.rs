use rand::Rng;

use super::KssEnv;
use crate::data::SessionLog;
use crate::kt::InteractionRecord;
use crate::rngs;

/// Minimum length of a generated session.
pub const MIN_SYNTH_LEN: usize = 5;

/// Generates offline sessions: each session resets a KSS learner and
/// practices uniformly random items for a uniform length in
/// `[5, max_len]`, recording the observed scores.
pub fn generate_synthetic_logs(
    env: &KssEnv,
    n_sessions: usize,
    max_len: usize,
    seed: u64,
) -> crate::Result<Vec<SessionLog>> {
    let m = env.graph().num_items();
    let max_len = max_len.max(MIN_SYNTH_LEN);
    (0..n_sessions)
        .map(|i| {
            let mut rng = rngs::stream(seed, "gen-data", &[i as u64]);
            let (mut learner, _, _, _) = env.sample_session(&mut rng)?;
            let len = rng.gen_range(MIN_SYNTH_LEN..=max_len);
            let records = (0..len)
                .map(|_| {
                    let item = rng.gen_range(0..m);
                    let p = env.correct_prob(&learner, item);
                    let score = (rng.gen::<f64>() < p) as u8;
                    learner.practice(item, env.graph(), env.config());
                    InteractionRecord { item, score }
                })
                .collect();
            Ok(SessionLog {
                session_id: format!("s{i}"),
                records,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::default_kss_graph;
    use crate::sim::KssConfig;
    use std::sync::Arc;

    #[test]
    fn generated_corpus_shape() {
        let env = KssEnv::new(Arc::new(default_kss_graph()), KssConfig::default()).unwrap();
        let logs = generate_synthetic_logs(&env, 200, 50, 3).unwrap();
        assert_eq!(logs.len(), 200);
        let mut correct = 0usize;
        let mut total = 0usize;
        for s in &logs {
            assert!((5..=50).contains(&s.records.len()));
            for r in &s.records {
                assert!(r.item < 10);
                correct += r.score as usize;
                total += 1;
            }
        }
        let rate = correct as f64 / total as f64;
        assert!(rate > 0.05 && rate < 0.95, "{rate}");
        assert_eq!(logs, generate_synthetic_logs(&env, 200, 50, 3).unwrap());
    }
}
