//! Session logs: ingestion, the session file format, and dataset partitions.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::{ItemId, TargetSet};
use crate::kt::InteractionRecord;
use crate::rngs;

/// Minimum session length accepted by [`make_kes_episode`].
pub const MIN_KES_SESSION: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionLog {
    pub session_id: String,
    pub records: Vec<InteractionRecord>,
}

/// Bidirectional mapping between concept names and item ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameTable {
    names: Vec<String>,
    index: HashMap<String, ItemId>,
}

impl NameTable {
    /// Names `item_0 .. item_{M-1}` used for synthetic data.
    pub fn synthetic(num_items: usize) -> Self {
        let names: Vec<String> = (0..num_items).map(|k| format!("item_{k}")).collect();
        let index = names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        NameTable { names, index }
    }

    /// Parses `concept_name,item_id` CSV (header optional).
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == "concept_name,item_id" {
                continue;
            }
            let (name, id) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::parse(idx + 1, "expected `concept_name,item_id`"))?;
            let id: ItemId = id
                .trim()
                .parse()
                .map_err(|_| Error::parse(idx + 1, format!("bad item id `{id}`")))?;
            pairs.push((name.trim().to_string(), id));
        }
        let num_items = pairs.iter().map(|&(_, id)| id + 1).max().unwrap_or(0);
        let mut names = vec![String::new(); num_items];
        let mut index = HashMap::new();
        for (name, id) in pairs {
            if index.insert(name.clone(), id).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate concept name `{name}`")));
            }
            names[id] = name;
        }
        Ok(NameTable { names, index })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("concept_name,item_id\n");
        for (id, name) in self.names.iter().enumerate() {
            let _ = writeln!(out, "{name},{id}");
        }
        out
    }

    pub fn id(&self, name: &str) -> Option<ItemId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ItemId) -> &str {
        &self.names[id]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Outcome of [`parse_logs`]: sessions plus warnings for skipped lines.
#[derive(Debug, Clone, Default)]
pub struct ParsedLogs {
    pub sessions: Vec<SessionLog>,
    pub warnings: Vec<String>,
}

/// Parses the `user_id,concept_name,session_id,correct,timestamp` log CSV.
///
/// Rows are grouped by session id (sessions keep first-appearance order) and
/// sorted by timestamp within a session; equal timestamps keep file order.
/// In strict mode the first bad line is an error; in lenient mode it is
/// skipped and reported in `warnings`.
pub fn parse_logs(text: &str, names: &NameTable, strict: bool) -> Result<ParsedLogs> {
    let mut out = ParsedLogs::default();
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(i64, InteractionRecord)>> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("user_id,") {
            continue;
        }
        let parsed = (|| -> Result<(String, i64, InteractionRecord)> {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::parse(line_no, format!("expected 5 fields, got {}", fields.len())));
            }
            let item = names
                .id(fields[1])
                .ok_or_else(|| Error::UnknownConcept(fields[1].to_string()))?;
            let score = match fields[3] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(line_no, format!("correct must be 0 or 1, got `{other}`"))),
            };
            let ts: i64 = fields[4]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad timestamp `{}`", fields[4])))?;
            Ok((fields[2].to_string(), ts, InteractionRecord { item, score }))
        })();
        match parsed {
            Ok((sid, ts, rec)) => {
                let entry = rows.entry(sid.clone()).or_insert_with(|| {
                    order.push(sid);
                    Vec::new()
                });
                entry.push((ts, rec));
            }
            Err(e) if strict => return Err(e),
            Err(e) => {
                let msg = format!("line {line_no}: {e}");
                log::warn!("skipping log {msg}");
                out.warnings.push(msg);
            }
        }
    }
    for sid in order {
        let mut recs = rows.remove(&sid).expect("session recorded in order");
        recs.sort_by_key(|&(ts, _)| ts);
        out.sessions.push(SessionLog {
            session_id: sid,
            records: recs.into_iter().map(|(_, r)| r).collect(),
        });
    }
    Ok(out)
}

/// Writes sessions in the log CSV format. The session id doubles as the user
/// id and timestamps are record positions.
pub fn write_logs(sessions: &[SessionLog], names: &NameTable) -> String {
    let mut out = String::from("user_id,concept_name,session_id,correct,timestamp\n");
    for s in sessions {
        for (t, r) in s.records.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.session_id,
                names.name(r.item),
                s.session_id,
                r.score,
                t
            );
        }
    }
    out
}

/// Parses the session file: `session_id<TAB>item:score,item:score,...` per
/// line; blank lines and `#` comments are ignored.
pub fn parse_sessions(text: &str) -> Result<Vec<SessionLog>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let (sid, body) = raw
            .split_once('\t')
            .ok_or_else(|| Error::parse(line_no, "expected `session_id<TAB>records`"))?;
        let records = body
            .split(',')
            .map(|tok| {
                let (item, score) = tok
                    .split_once(':')
                    .ok_or_else(|| Error::parse(line_no, format!("bad record `{tok}`")))?;
                let item: ItemId = item
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad item `{item}`")))?;
                let score: u8 = match score.trim() {
                    "0" => 0,
                    "1" => 1,
                    s => return Err(Error::parse(line_no, format!("bad score `{s}`"))),
                };
                Ok(InteractionRecord { item, score })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(SessionLog {
            session_id: sid.to_string(),
            records,
        });
    }
    Ok(out)
}

pub fn write_sessions(sessions: &[SessionLog]) -> String {
    let mut out = String::new();
    for s in sessions {
        let recs: Vec<String> = s
            .records
            .iter()
            .map(|r| format!("{}:{}", r.item, r.score))
            .collect();
        let _ = writeln!(out, "{}\t{}", s.session_id, recs.join(","));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<SessionLog>,
    pub validation: Vec<SessionLog>,
    pub test: Vec<SessionLog>,
}

/// Shuffles sessions with `seed` and cuts them by `proportions`
/// (train, validation, test). Train and validation sizes are floored; the
/// test part takes the remainder.
pub fn split_dataset(sessions: &[SessionLog], proportions: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let total: f64 = proportions.iter().sum();
    if (total - 1.0).abs() > 1e-9 || proportions.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "split proportions must be non-negative and sum to 1, got {proportions:?}"
        )));
    }
    let n = sessions.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rngs::stream(seed, "split", &[]));
    let cut = |p: f64| ((p * n as f64) + 1e-9).floor() as usize;
    let n_train = cut(proportions[0]).min(n);
    let n_valid = cut(proportions[1]).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| sessions[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_valid]),
        test: pick(&order[n_train + n_valid..]),
    })
}

/// Initialization records and target of one KES episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KesEpisodeSpec {
    pub session_id: String,
    pub init_records: Vec<InteractionRecord>,
    pub target: TargetSet,
}

/// First 60% of the records initialize the learner, the middle 20% is
/// unused, and the distinct items of the last 20% form the target. Returns
/// `None` for sessions shorter than [`MIN_KES_SESSION`].
pub fn make_kes_episode(session: &SessionLog) -> Option<KesEpisodeSpec> {
    let len = session.records.len();
    if len < MIN_KES_SESSION {
        return None;
    }
    let init_end = 6 * len / 10;
    let target_start = 8 * len / 10;
    let items: BTreeSet<ItemId> = session.records[target_start..].iter().map(|r| r.item).collect();
    Some(KesEpisodeSpec {
        session_id: session.session_id.clone(),
        init_records: session.records[..init_end].to_vec(),
        target: TargetSet::new(items).ok()?,
    })
}

/// Builds episodes for every long-enough session; returns them with the
/// number of sessions skipped.
pub fn make_kes_episodes(sessions: &[SessionLog]) -> (Vec<KesEpisodeSpec>, usize) {
    let episodes: Vec<_> = sessions.iter().filter_map(make_kes_episode).collect();
    let skipped = sessions.len() - episodes.len();
    if skipped > 0 {
        log::info!("skipped {skipped} session(s) shorter than {MIN_KES_SESSION} records");
    }
    (episodes, skipped)
}
