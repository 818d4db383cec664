//! Turns a [`Config`] into library objects.

use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use cseal::agent::{AgentConfig, Method};
use cseal::data::{make_kes_episodes, parse_logs, parse_sessions, KesEpisodeSpec, NameTable, SessionLog};
use cseal::graph::{break_cycles, default_kss_graph, load_graph, parse_edge_list};
use cseal::kt::{DktConfig, DktModel};
use cseal::sim::{Environment, KesConfig, KesEnv, KssConfig, KssEnv};
use cseal::{PrereqGraph, Result as CoreResult};

use crate::config::{Config, UsageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Kss,
    Kes,
}

pub fn env_kind(cfg: &Config) -> anyhow::Result<EnvKind> {
    match cfg.raw("env").unwrap_or("kss") {
        "kss" => Ok(EnvKind::Kss),
        "kes" => Ok(EnvKind::Kes),
        other => Err(UsageError(format!("unknown environment `{other}` (kss or kes)")).into()),
    }
}

pub fn method(cfg: &Config) -> anyhow::Result<Method> {
    let name = cfg.raw("method").unwrap_or("cseal");
    name.parse().map_err(|_| UsageError(format!("unknown method `{name}`")).into())
}

pub fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Graph file if configured, otherwise the built-in KSS graph. Cycles in a
/// file are broken with a warning.
pub fn graph(cfg: &Config) -> anyhow::Result<PrereqGraph> {
    match cfg.path("graph") {
        None => Ok(default_kss_graph()),
        Some(p) => {
            let g = parse_edge_list(&read(&p)?)?;
            let dag = break_cycles(&load_graph(g.edges(), g.num_items())?);
            if dag.edges().len() != g.edges().len() {
                log::warn!("{}: removed {} edge(s) to break cycles", p.display(), g.edges().len() - dag.edges().len());
            }
            Ok(dag)
        }
    }
}

pub fn kss_config(cfg: &Config) -> anyhow::Result<KssConfig> {
    Ok(KssConfig {
        g_max: cfg.get("kss.g_max")?,
        tau: cfg.get("kss.tau")?,
        init_max: cfg.get("kss.init_max")?,
        skip_threshold: cfg.get("kss.skip")?,
        discrimination: cfg.get("kss.discrimination")?,
        guessing: cfg.get("kss.guessing")?,
        max_target: cfg.get("kss.max_target")?,
        difficulty: None,
    })
}

pub fn dkt_config(cfg: &Config, kind: EnvKind, num_items: usize, seed: u64) -> anyhow::Result<DktConfig> {
    let mut d = match kind {
        EnvKind::Kss => DktConfig::kss(num_items),
        EnvKind::Kes => DktConfig::kes(num_items),
    };
    if let Some(v) = cfg.get_opt("dkt.embed_dim")? {
        d.embed_dim = v;
    }
    if let Some(v) = cfg.get_opt("dkt.hidden_dim")? {
        d.hidden_dim = v;
    }
    d.lr = cfg.get("dkt.lr")?;
    d.batch_size = cfg.get("dkt.batch")?;
    d.max_epochs = cfg.get("dkt.max_epochs")?;
    d.patience = cfg.get("dkt.patience")?;
    d.embed_dropout = cfg.get("dkt.embed_dropout")?;
    d.lstm_dropout = cfg.get("dkt.lstm_dropout")?;
    d.clip_norm = cfg.get("dkt.clip")?;
    d.seed = seed;
    Ok(d)
}

pub fn agent_config(cfg: &Config, seed: u64) -> anyhow::Result<AgentConfig> {
    let hidden: Vec<usize> = cfg.list("hidden")?;
    let [h1, h2] = hidden[..] else {
        return Err(UsageError("hidden must list two layer sizes".into()).into());
    };
    let a = AgentConfig {
        gamma: cfg.get("gamma")?,
        alpha: cfg.get("alpha")?,
        beta: cfg.get("beta")?,
        path_len: cfg.get("path_len")?,
        lr: cfg.get("lr")?,
        entropy_weight: cfg.get("entropy")?,
        batch_size: cfg.get("batch")?,
        epochs: cfg.get("epochs")?,
        clip_norm: cfg.get("clip")?,
        hidden: [h1, h2],
        dropout: cfg.get("dropout")?,
        hops: cfg.get("hops")?,
        seed,
    };
    a.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(a)
}

/// Sessions from the configured session file, or from a CSV log when
/// `logs` is set (concept names resolved through `names`).
pub fn sessions(cfg: &Config) -> anyhow::Result<Vec<SessionLog>> {
    if let Some(logs) = cfg.path("logs") {
        let names = match cfg.path("names") {
            Some(p) => NameTable::parse(&read(&p)?)?,
            None => NameTable::synthetic(graph(cfg)?.num_items()),
        };
        let parsed = parse_logs(&read(&logs)?, &names, false)?;
        for w in &parsed.warnings {
            log::warn!("{w}");
        }
        return Ok(parsed.sessions);
    }
    let path = cfg.path_or("data", "sessions.tsv");
    Ok(parse_sessions(&read(&path)?)?)
}

pub fn load_kt(cfg: &Config) -> anyhow::Result<DktModel> {
    let path = cfg.path_or("kt", "dkt.ckpt");
    if !path.exists() {
        anyhow::bail!(cseal::Error::Checkpoint(format!(
            "knowledge tracing checkpoint {} not found; run train-dkt first",
            path.display()
        )));
    }
    Ok(DktModel::load(&path)?)
}

/// Everything needed to play episodes.
pub struct World {
    pub graph: Arc<PrereqGraph>,
    pub kt: DktModel,
    kind: EnvKind,
    kss: KssConfig,
    kes: Option<(Arc<DktModel>, Arc<Vec<KesEpisodeSpec>>, KesConfig)>,
}

impl World {
    pub fn load(cfg: &Config) -> anyhow::Result<Self> {
        let kind = env_kind(cfg)?;
        let graph = Arc::new(graph(cfg)?);
        let kt = load_kt(cfg)?;
        if kt.num_items() != graph.num_items() {
            anyhow::bail!(cseal::Error::Shape(format!(
                "KT model covers {} items but the graph has {}",
                kt.num_items(),
                graph.num_items()
            )));
        }
        let kes = match kind {
            EnvKind::Kss => None,
            EnvKind::Kes => {
                let model_path = cfg.path_or("env_model", "env_dkt.ckpt");
                let model = DktModel::load(&model_path)
                    .with_context(|| format!("loading KES learner model {}", model_path.display()))?;
                let data = cfg.path_or("episodes_data", "sessions.tsv");
                let (specs, _) = make_kes_episodes(&parse_sessions(&read(&data)?)?);
                if specs.is_empty() {
                    anyhow::bail!(cseal::Error::InvalidArgument(format!(
                        "{} yields no usable KES episodes",
                        data.display()
                    )));
                }
                let kcfg = KesConfig { skip_threshold: cfg.get("kes.skip")? };
                Some((Arc::new(model), Arc::new(specs), kcfg))
            }
        };
        Ok(World {
            graph,
            kt,
            kind,
            kss: kss_config(cfg)?,
            kes,
        })
    }

    pub fn make_env(&self) -> CoreResult<Box<dyn Environment>> {
        match (self.kind, &self.kes) {
            (EnvKind::Kes, Some((model, specs, kcfg))) => {
                Ok(Box::new(KesEnv::new(model.clone(), specs.clone(), kcfg.clone())?))
            }
            _ => Ok(Box::new(KssEnv::new(self.graph.clone(), self.kss.clone())?)),
        }
    }

    pub fn factory(&self) -> impl Fn() -> CoreResult<Box<dyn Environment>> + Sync + '_ {
        move || self.make_env()
    }
}
