//! Command implementations.

use std::io::Write;

use anyhow::Context;
use cseal::agent::{evaluate, play_seeded, train, McsPlanner, Method, PolicyValueNet, Recommender};
use cseal::data::{split_dataset, write_sessions, SessionLog};
use cseal::kt::{self, InteractionRecord};
use cseal::nn::Mode;
use cseal::rngs;
use cseal::sim::{generate_synthetic_logs, KssEnv};
use cseal::{ItemId, PrereqGraph, TargetSet};
use serde::Serialize;
use serde_json::json;

use crate::config::{Config, UsageError};
use crate::output::{create, text_header, JsonLines, Timing};
use crate::setup::{self, EnvKind, World};

pub fn gen_data(cfg: &Config) -> anyhow::Result<()> {
    if setup::env_kind(cfg)? != EnvKind::Kss {
        return Err(UsageError("gen-data only simulates the kss environment".into()).into());
    }
    let seed = cfg.seed()?;
    let graph = setup::graph(cfg)?;
    let env = KssEnv::new(graph.into(), setup::kss_config(cfg)?)?;
    let sessions = generate_synthetic_logs(&env, cfg.get("sessions")?, cfg.get("max_len")?, seed)?;
    let path = cfg.path_or("data", "sessions.tsv");
    let mut out = create(&path)?;
    out.write_all(text_header("gen-data", cfg).as_bytes())?;
    out.write_all(write_sessions(&sessions).as_bytes())?;
    out.flush()?;
    log::info!("wrote {} sessions to {}", sessions.len(), path.display());
    Ok(())
}

fn records(sessions: &[SessionLog]) -> Vec<Vec<InteractionRecord>> {
    sessions.iter().map(|s| s.records.clone()).collect()
}

pub fn train_dkt(cfg: &Config) -> anyhow::Result<()> {
    let seed = cfg.seed()?;
    let kind = setup::env_kind(cfg)?;
    let num_items = setup::graph(cfg)?.num_items();
    let sessions = setup::sessions(cfg)?;
    if sessions.is_empty() {
        anyhow::bail!(cseal::Error::InvalidArgument("dataset has no sessions".into()));
    }
    let split: Vec<f64> = cfg.list("split")?;
    let [a, b, c] = split[..] else {
        return Err(UsageError("split needs three proportions".into()).into());
    };
    let parts = split_dataset(&sessions, [a, b, c], rngs::derive_seed(seed, "split", &[]))?;
    let dcfg = setup::dkt_config(cfg, kind, num_items, seed)?;

    let metrics_path = cfg.out_dir().join("dkt_metrics.jsonl");
    let mut timing = Timing::beside(&metrics_path)?;
    let trained = kt::train_dkt(&records(&parts.train), &records(&parts.validation), &dcfg)?;
    timing.mark("train-dkt", trained.history.len())?;

    let mut metrics = JsonLines::create(&metrics_path, "train-dkt", cfg)?;
    for e in &trained.history {
        metrics.write(e)?;
    }
    let (test_loss, test_auc) = trained.model.evaluate(&records(&parts.test))?;
    metrics.write(&json!({
        "summary": true,
        "best_epoch": trained.best_epoch,
        "train_sessions": parts.train.len(),
        "validation_sessions": parts.validation.len(),
        "test_sessions": parts.test.len(),
        "test_loss": test_loss,
        "test_auc": test_auc,
    }))?;
    metrics.finish()?;
    timing.finish()?;

    let ckpt = cfg.path_or("kt", "dkt.ckpt");
    if let Some(dir) = ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    trained.model.save(&ckpt)?;
    log::info!(
        "best epoch {}, test loss {test_loss:.4}, test AUC {}; checkpoint {}",
        trained.best_epoch,
        test_auc.map_or("n/a".to_string(), |v| format!("{v:.4}")),
        ckpt.display()
    );
    Ok(())
}

fn agent_path(cfg: &Config, method: Method) -> std::path::PathBuf {
    cfg.path_or("agent", &format!("agent-{method}.ckpt"))
}

pub fn train_agent(cfg: &Config) -> anyhow::Result<()> {
    let method = setup::method(cfg)?;
    if !method.is_trainable() {
        return Err(UsageError(format!("method {method} requires no training")).into());
    }
    let seed = cfg.seed()?;
    let acfg = setup::agent_config(cfg, seed)?;
    let world = World::load(cfg)?;
    let mut net = PolicyValueNet::new(world.graph.num_items(), acfg.hidden, acfg.dropout, seed);

    let curve_path = cfg.out_dir().join(format!("curve-{method}.jsonl"));
    let mut curve = JsonLines::create(&curve_path, "train-agent", cfg)?;
    let mut timing = Timing::beside(&curve_path)?;
    let mut write_err = None;
    let factory = world.factory();
    train(&mut net, &factory, &world.kt, &world.graph, method == Method::Cseal, &acfg, |log| {
        if write_err.is_none() {
            if let Err(e) = curve.write(log).and_then(|_| timing.mark("epoch", log.epoch)) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    curve.finish()?;
    timing.finish()?;
    let path = agent_path(cfg, method);
    net.save(&path).with_context(|| format!("saving {}", path.display()))?;
    log::info!("trained {method}; checkpoint {}", path.display());
    Ok(())
}

fn load_policy(cfg: &Config, method: Method) -> anyhow::Result<Option<PolicyValueNet>> {
    if !method.is_trainable() {
        return Ok(None);
    }
    let path = agent_path(cfg, method);
    if !path.exists() {
        anyhow::bail!(cseal::Error::Checkpoint(format!(
            "agent checkpoint {} not found; run train-agent first",
            path.display()
        )));
    }
    Ok(Some(PolicyValueNet::load(&path)?))
}

#[derive(Serialize)]
struct Summary<'a> {
    summary: bool,
    method: &'a str,
    episodes: usize,
    mean: f64,
    stderr: f64,
    ci_low: f64,
    ci_high: f64,
    kt_forward_passes: u64,
}

pub fn eval(cfg: &Config) -> anyhow::Result<()> {
    let method = setup::method(cfg)?;
    let seed = cfg.seed()?;
    let acfg = setup::agent_config(cfg, seed)?;
    let world = World::load(cfg)?;
    let net = load_policy(cfg, method)?;
    let episodes: usize = cfg.get("episodes")?;
    let factory = world.factory();
    let report = evaluate(method, net.as_ref(), &factory, &world.kt, &world.graph, &acfg, episodes, cfg.get("greedy")?)?;

    let path = cfg.out_dir().join(format!("eval-{method}.jsonl"));
    let mut out = JsonLines::create(&path, "eval", cfg)?;
    for e in &report.episodes {
        out.write(e)?;
    }
    out.write(&Summary {
        summary: true,
        method: &report.method,
        episodes: report.episodes.len(),
        mean: report.mean,
        stderr: report.stderr,
        ci_low: report.ci_low,
        ci_high: report.ci_high,
        kt_forward_passes: report.kt_forward_passes,
    })?;
    out.finish()?;
    println!(
        "{method}: mean E_P {:.4} (stderr {:.4}, 95% CI [{:.4}, {:.4}]) over {} episodes",
        report.mean,
        report.stderr,
        report.ci_low,
        report.ci_high,
        report.episodes.len()
    );
    Ok(())
}

pub fn sweep_length(cfg: &Config) -> anyhow::Result<()> {
    let method = setup::method(cfg)?;
    let seed = cfg.seed()?;
    let base = setup::agent_config(cfg, seed)?;
    let lengths: Vec<usize> = cfg.list("lengths")?;
    if lengths.is_empty() || lengths.contains(&0) {
        return Err(UsageError("lengths must be positive".into()).into());
    }
    let world = World::load(cfg)?;
    let net = load_policy(cfg, method)?;
    let episodes: usize = cfg.get("episodes")?;
    let greedy: bool = cfg.get("greedy")?;
    let factory = world.factory();

    let path = cfg.out_dir().join(format!("sweep-{method}.csv"));
    let mut out = create(&path)?;
    out.write_all(text_header("sweep-length", cfg).as_bytes())?;
    writeln!(out, "length,mean_ep,stderr,episodes")?;
    for n in lengths {
        let acfg = cseal::agent::AgentConfig { path_len: n, ..base.clone() };
        let r = evaluate(method, net.as_ref(), &factory, &world.kt, &world.graph, &acfg, episodes, greedy)?;
        writeln!(out, "{n},{},{},{}", r.mean, r.stderr, r.episodes.len())?;
        println!("N={n}: mean E_P {:.4} (stderr {:.4})", r.mean, r.stderr);
    }
    out.flush()?;
    Ok(())
}

/// How an item relates to the session target.
pub fn role(graph: &PrereqGraph, target: &TargetSet, item: ItemId) -> &'static str {
    if target.contains(item) {
        "target"
    } else if graph.can_reach(item, target) {
        "prereq"
    } else {
        "other"
    }
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>, sep: &str) -> String {
    let v: Vec<String> = xs.into_iter().map(|x| x.to_string()).collect();
    if v.is_empty() {
        "-".to_string()
    } else {
        v.join(sep)
    }
}

/// Line grammar:
///
/// ```text
/// episode <e> target=<ids> e_start=<f> e_end=<f> e_sup=<f> ep=<f>
/// history <item:score ...|->
/// step <i> item=<id> role=<target|prereq|other> score=<0|1> candidates=<ids|->
/// path <id:role ...>
/// ```
///
/// `<ids>` are comma-separated item ids; the history shows at most the last
/// ten records.
pub fn show_path(cfg: &Config) -> anyhow::Result<()> {
    let method = setup::method(cfg)?;
    let seed = cfg.seed()?;
    let acfg = setup::agent_config(cfg, seed)?;
    let world = World::load(cfg)?;
    let net = load_policy(cfg, method)?;
    let planner = match method {
        Method::Mcs(r) => Some(McsPlanner::new(r)?),
        _ => None,
    };
    let recommender = match (method, &net, &planner) {
        (Method::Cseal | Method::CsealNcn, Some(net), _) => Recommender::Policy {
            net,
            masked: method == Method::Cseal,
            mode: Mode::Eval,
            greedy: cfg.get("greedy")?,
        },
        (Method::CnRandom, ..) => Recommender::CnRandom,
        (Method::Cog, ..) => Recommender::Cog,
        (Method::Mcs(_), _, Some(p)) => Recommender::Mcs(p),
        _ => unreachable!("policy loaded for trainable methods"),
    };
    let episodes: usize = cfg.get("episodes")?;
    let eval_seed = rngs::derive_seed(seed, "eval", &[]);

    let path = cfg.out_dir().join(format!("paths-{method}.txt"));
    let mut text = text_header("show-path", cfg);
    let mut env = world.make_env()?;
    for e in 0..episodes {
        let t = play_seeded(env.as_mut(), &world.kt, &world.graph, recommender, &acfg, eval_seed, e as u64, false)?;
        let target = &t.start.target;
        text.push_str(&format!(
            "episode {e} target={} e_start={} e_end={} e_sup={} ep={}\n",
            join(target.iter(), ","),
            t.start.e_start,
            t.e_end,
            t.start.e_sup,
            t.ep
        ));
        let hist = &t.start.history;
        let tail = &hist[hist.len().saturating_sub(10)..];
        text.push_str(&format!("history {}\n", join(tail.iter().map(|r| format!("{}:{}", r.item, r.score)), " ")));
        for (i, s) in t.steps.iter().enumerate() {
            text.push_str(&format!(
                "step {i} item={} role={} score={} candidates={}\n",
                s.action,
                role(&world.graph, target, s.action),
                s.score,
                join(s.candidates.iter(), ",")
            ));
        }
        text.push_str(&format!(
            "path {}\n",
            join(t.steps.iter().map(|s| format!("{}:{}", s.action, role(&world.graph, target, s.action))), " ")
        ));
    }
    let mut out = create(&path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    print!("{text}");
    Ok(())
}
