//! Embedding-DKT knowledge tracing.
//!
//! Each interaction `(item, score)` is looked up in a `2M x d` embedding,
//! fed through an LSTM, and the hidden state is mapped to a per-item mastery
//! vector by a sigmoid output layer. The zero initial state pushed through the
//! output layer is the "cold" level used before any interaction is seen.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::ItemId;
use crate::metrics;
use crate::nn::{
    self, bce_grad, bce_loss, dropout, Activation, Checkpoint, Dense, DropoutMask, Embedding,
    Gradients, LstmCache, LstmCell, Mode, Optimizer, ParamStore,
};
use crate::rngs::{self, Rng};

/// One learning event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InteractionRecord {
    pub item: ItemId,
    pub score: u8,
}

impl InteractionRecord {
    pub fn new(item: ItemId, correct: bool) -> Self {
        InteractionRecord {
            item,
            score: correct as u8,
        }
    }

    pub fn correct(&self) -> bool {
        self.score != 0
    }
}

/// Row of the embedding table for a record: `item + score * M`.
pub fn encode_interaction(rec: InteractionRecord, num_items: usize) -> usize {
    rec.item + rec.score as usize * num_items
}

/// Per-item mastery estimate, each component strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeLevel(pub Vec<f64>);

impl KnowledgeLevel {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, item: ItemId) -> f64 {
        self.0[item]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DktConfig {
    pub num_items: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub embed_dropout: f64,
    pub lstm_dropout: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl DktConfig {
    /// Small profile: d = 15, H = 20.
    pub fn kss(num_items: usize) -> Self {
        DktConfig {
            num_items,
            embed_dim: 15,
            hidden_dim: 20,
            lr: 1e-3,
            batch_size: 16,
            max_epochs: 50,
            patience: 3,
            embed_dropout: 0.2,
            lstm_dropout: 0.5,
            clip_norm: 5.0,
            seed: 0,
        }
    }

    /// Large profile: d = 600, H = 900.
    pub fn kes(num_items: usize) -> Self {
        DktConfig {
            embed_dim: 600,
            hidden_dim: 900,
            ..Self::kss(num_items)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DktModel {
    num_items: usize,
    embed_dim: usize,
    hidden_dim: usize,
    store: ParamStore,
    embedding: Embedding,
    lstm: LstmCell,
    output: Dense,
}

/// Recurrent state after consuming a prefix of records.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    h: Vec<f64>,
    c: Vec<f64>,
    level: KnowledgeLevel,
    steps: usize,
}

impl TraceState {
    pub fn level(&self) -> &KnowledgeLevel {
        &self.level
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Forward trace of one session with everything needed for backward.
struct SessionTape {
    inputs: Vec<usize>,
    embed_masks: Vec<DropoutMask>,
    lstm: Vec<LstmCache>,
    lstm_masks: Vec<DropoutMask>,
    dropped_h: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl DktModel {
    pub fn new(num_items: usize, embed_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = rngs::stream(seed, "dkt-init", &[]);
        let mut store = ParamStore::new();
        let embedding = Embedding::new(&mut store, "embedding", 2 * num_items, embed_dim, &mut rng);
        let lstm = LstmCell::new(&mut store, "lstm", embed_dim, hidden_dim, &mut rng);
        let output = Dense::new(
            &mut store,
            "output",
            hidden_dim,
            num_items,
            Activation::Sigmoid,
            &mut rng,
        );
        DktModel {
            num_items,
            embed_dim,
            hidden_dim,
            store,
            embedding,
            lstm,
            output,
        }
    }

    pub fn from_config(cfg: &DktConfig) -> Self {
        Self::new(cfg.num_items, cfg.embed_dim, cfg.hidden_dim, cfg.seed)
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Mastery vector of an empty history.
    pub fn cold_level(&self) -> KnowledgeLevel {
        KnowledgeLevel(self.output.forward(&self.store, &vec![0.0; self.hidden_dim]))
    }

    pub fn start(&self) -> TraceState {
        TraceState {
            h: vec![0.0; self.hidden_dim],
            c: vec![0.0; self.hidden_dim],
            level: self.cold_level(),
            steps: 0,
        }
    }

    fn check(&self, rec: InteractionRecord) -> Result<()> {
        if rec.item >= self.num_items || rec.score > 1 {
            return Err(Error::ItemOutOfRange {
                item: rec.item,
                num_items: self.num_items,
            });
        }
        Ok(())
    }

    /// Consumes one record in inference mode.
    pub fn observe(&self, state: &mut TraceState, rec: InteractionRecord) -> Result<()> {
        self.check(rec)?;
        let x = self
            .embedding
            .lookup(&self.store, encode_interaction(rec, self.num_items))?;
        let step = self.lstm.step(&self.store, &x, &state.h, &state.c)?;
        state.level = KnowledgeLevel(self.output.forward(&self.store, &step.h));
        state.h = step.h;
        state.c = step.c;
        state.steps += 1;
        Ok(())
    }

    pub fn state_after(&self, records: &[InteractionRecord]) -> Result<TraceState> {
        let mut state = self.start();
        for &r in records {
            self.observe(&mut state, r)?;
        }
        Ok(state)
    }

    /// Knowledge level after each prefix `1..=t` of `records`.
    pub fn trace(&self, records: &[InteractionRecord]) -> Result<Vec<KnowledgeLevel>> {
        let mut state = self.start();
        let mut out = Vec::with_capacity(records.len());
        for &r in records {
            self.observe(&mut state, r)?;
            out.push(state.level.clone());
        }
        Ok(out)
    }

    /// Probability that `item` is answered correctly after `history`.
    pub fn predict_next_correct(&self, history: &[InteractionRecord], item: ItemId) -> Result<f64> {
        if item >= self.num_items {
            return Err(Error::ItemOutOfRange {
                item,
                num_items: self.num_items,
            });
        }
        Ok(self.state_after(history)?.level.get(item))
    }

    fn forward_tape(
        &self,
        records: &[InteractionRecord],
        embed_p: f64,
        lstm_p: f64,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<SessionTape> {
        let n = records.len();
        let mut tape = SessionTape {
            inputs: Vec::with_capacity(n),
            embed_masks: Vec::with_capacity(n),
            lstm: Vec::with_capacity(n),
            lstm_masks: Vec::with_capacity(n),
            dropped_h: Vec::with_capacity(n),
            outputs: Vec::with_capacity(n),
        };
        let mut h = vec![0.0; self.hidden_dim];
        let mut c = vec![0.0; self.hidden_dim];
        for &r in records {
            self.check(r)?;
            let idx = encode_interaction(r, self.num_items);
            let raw = self.embedding.lookup(&self.store, idx)?;
            let (x, emask) = dropout(&raw, embed_p, mode, rng);
            let step = self.lstm.step(&self.store, &x, &h, &c)?;
            let (hd, hmask) = dropout(&step.h, lstm_p, mode, rng);
            let y = self.output.forward(&self.store, &hd);
            h = step.h.clone();
            c = step.c.clone();
            tape.inputs.push(idx);
            tape.embed_masks.push(emask);
            tape.lstm.push(step);
            tape.lstm_masks.push(hmask);
            tape.dropped_h.push(hd);
            tape.outputs.push(y);
        }
        Ok(tape)
    }

    /// Summed next-step BCE of a session and its gradient. The prediction for
    /// record `t` (t >= 1) is the output after records `0..t` at `item_t`.
    fn session_loss_and_grad(
        &self,
        records: &[InteractionRecord],
        embed_p: f64,
        lstm_p: f64,
        mode: Mode,
        rng: &mut Rng,
        grads: &mut Gradients,
    ) -> Result<(f64, usize)> {
        let tape = self.forward_tape(records, embed_p, lstm_p, mode, rng)?;
        let n = records.len();
        let hn = self.hidden_dim;
        let mut loss = 0.0;
        let mut dh_next = vec![0.0; hn];
        let mut dc_next = vec![0.0; hn];
        for t in (0..n).rev() {
            let mut dh = dh_next.clone();
            if t + 1 < n {
                let next = records[t + 1];
                let p = tape.outputs[t][next.item];
                let y = next.score as f64;
                loss += bce_loss(p, y);
                let mut dy = vec![0.0; self.num_items];
                dy[next.item] = bce_grad(p, y);
                let mut dhd = self
                    .output
                    .backward(&self.store, &tape.dropped_h[t], &tape.outputs[t], &dy, grads);
                tape.lstm_masks[t].backward(&mut dhd);
                for (a, b) in dh.iter_mut().zip(&dhd) {
                    *a += b;
                }
            }
            let (mut dx, dhp, dcp) =
                self.lstm
                    .backward_step(&self.store, &tape.lstm[t], &dh, &dc_next, grads);
            tape.embed_masks[t].backward(&mut dx);
            self.embedding.backward(tape.inputs[t], &dx, grads);
            dh_next = dhp;
            dc_next = dcp;
        }
        Ok((loss, n.saturating_sub(1)))
    }

    /// Summed next-step BCE with dropout disabled, plus the gradient.
    pub fn loss_and_grad(&self, records: &[InteractionRecord]) -> Result<(f64, Gradients)> {
        let mut grads = self.store.zero_grads_like();
        let mut rng = rngs::stream(0, "unused", &[]);
        let (loss, _) =
            self.session_loss_and_grad(records, 0.0, 0.0, Mode::Eval, &mut rng, &mut grads)?;
        Ok((loss, grads))
    }

    /// Summed next-step BCE in inference mode.
    pub fn sequence_loss(&self, records: &[InteractionRecord]) -> Result<f64> {
        let mut state = self.start();
        let mut loss = 0.0;
        for (t, &r) in records.iter().enumerate() {
            if t > 0 {
                loss += bce_loss(state.level.get(r.item), r.score as f64);
            }
            self.observe(&mut state, r)?;
        }
        Ok(loss)
    }

    /// Mean per-prediction loss and AUC over a set of sessions.
    pub fn evaluate(&self, sessions: &[Vec<InteractionRecord>]) -> Result<(f64, Option<f64>)> {
        let per: Vec<(f64, Vec<f64>, Vec<bool>)> = sessions
            .par_iter()
            .map(|s| -> Result<_> {
                let mut state = self.start();
                let mut loss = 0.0;
                let mut scores = Vec::new();
                let mut labels = Vec::new();
                for (t, &r) in s.iter().enumerate() {
                    if t > 0 {
                        let p = state.level.get(r.item);
                        loss += bce_loss(p, r.score as f64);
                        scores.push(p);
                        labels.push(r.correct());
                    }
                    self.observe(&mut state, r)?;
                }
                Ok((loss, scores, labels))
            })
            .collect::<Result<_>>()?;
        let mut loss = 0.0;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for (l, s, y) in per {
            loss += l;
            scores.extend(s);
            labels.extend(y);
        }
        let count = scores.len().max(1) as f64;
        Ok((loss / count, metrics::auc(&scores, &labels)))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = BTreeMap::from([
            ("model".to_string(), "dkt".to_string()),
            ("num_items".to_string(), self.num_items.to_string()),
            ("embed_dim".to_string(), self.embed_dim.to_string()),
            ("hidden_dim".to_string(), self.hidden_dim.to_string()),
        ]);
        Checkpoint::from_store(&self.store, meta)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta.get("model").map(String::as_str) != Some("dkt") {
            return Err(Error::Checkpoint("not a DKT checkpoint".into()));
        }
        let mut model = DktModel::new(
            ckpt.meta_value("num_items")?,
            ckpt.meta_value("embed_dim")?,
            ckpt.meta_value("hidden_dim")?,
            0,
        );
        ckpt.restore_into(&mut model.store)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        nn::save_checkpoint(path, &self.to_checkpoint())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&nn::load_checkpoint(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DktEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DktTraining {
    pub model: DktModel,
    pub history: Vec<DktEpoch>,
    pub best_epoch: usize,
}

/// Fixed chunk size used to split a mini-batch across workers; the summation
/// order therefore does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

/// Trains a DKT on next-step binary cross-entropy with mini-batches, dropout,
/// gradient clipping and early stopping on validation loss. The returned
/// model holds the parameters of the best validation epoch.
pub fn train_dkt(
    train: &[Vec<InteractionRecord>],
    valid: &[Vec<InteractionRecord>],
    cfg: &DktConfig,
) -> Result<DktTraining> {
    let train: Vec<&Vec<InteractionRecord>> = train.iter().filter(|s| s.len() >= 2).collect();
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "DKT training needs at least one session with two or more records".into(),
        ));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::InvalidArgument("batch size and epochs must be positive".into()));
    }
    let mut model = DktModel::from_config(cfg);
    let mut opt = Optimizer::adam(cfg.lr, &model.store);
    let mut history = Vec::new();
    let mut best: Option<(f64, DktModel, usize)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rngs::stream(cfg.seed, "dkt-shuffle", &[epoch as u64]));
        let mut epoch_loss = 0.0;
        let mut epoch_preds = 0usize;

        for batch in order.chunks(cfg.batch_size) {
            let chunks: Vec<Result<(f64, usize, Gradients)>> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut grads = model.store.zero_grads_like();
                    let mut loss = 0.0;
                    let mut preds = 0;
                    for &si in chunk {
                        let mut rng =
                            rngs::stream(cfg.seed, "dkt-dropout", &[epoch as u64, si as u64]);
                        let (l, p) = model.session_loss_and_grad(
                            train[si],
                            cfg.embed_dropout,
                            cfg.lstm_dropout,
                            Mode::Train,
                            &mut rng,
                            &mut grads,
                        )?;
                        loss += l;
                        preds += p;
                    }
                    Ok((loss, preds, grads))
                })
                .collect();
            model.store.zero_grad();
            for chunk in chunks {
                let (l, p, g) = chunk?;
                epoch_loss += l;
                epoch_preds += p;
                model.store.accumulate(&g);
            }
            model.store.grads_mut().scale(1.0 / batch.len() as f64);
            nn::clip_gradients(&mut model.store, cfg.clip_norm);
            opt.step(&mut model.store);
        }
        if !model.store.all_finite() {
            return Err(Error::Numeric(format!("non-finite DKT parameters at epoch {epoch}")));
        }

        let train_loss = epoch_loss / epoch_preds.max(1) as f64;
        let (valid_loss, valid_auc) = if valid.is_empty() {
            (train_loss, None)
        } else {
            model.evaluate(valid)?
        };
        log::info!(
            "dkt epoch {epoch}: train {train_loss:.4} valid {valid_loss:.4} auc {:?}",
            valid_auc
        );
        history.push(DktEpoch {
            epoch,
            train_loss,
            valid_loss,
            valid_auc,
        });
        let improved = best.as_ref().map_or(true, |(b, _, _)| valid_loss < *b);
        if improved {
            best = Some((valid_loss, model.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, model, best_epoch) = best.expect("at least one epoch ran");
    Ok(DktTraining {
        model,
        history,
        best_epoch,
    })
}
