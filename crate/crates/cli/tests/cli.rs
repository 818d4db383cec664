use std::path::Path;
use std::process::{Command, Output};

use cseal::data::{parse_sessions, split_dataset};
use cseal::kt::DktModel;
use cseal::rngs;
use serde_json::Value;

fn cseal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cseal"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_clear()
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cseal(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

/// gen-data + a short DKT run in a fresh directory.
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--seed", "3", "--sessions", "200"]);
    ok(dir.path(), &["train-dkt", "--seed", "3", "--set", "dkt.max_epochs=4"]);
    dir
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| cseal(dir.path(), args).status.code();
    assert_eq!(code(&["gen-data"]), Some(1), "seed is mandatory");
    assert_eq!(code(&["gen-data", "--seed", "1", "--set", "no.such.key=1"]), Some(1));
    assert_eq!(code(&["gen-data", "--seed", "1", "--set", "gamma"]), Some(1));
    assert_eq!(code(&["eval", "--seed", "1", "--method", "mcs-0"]), Some(1));
    assert_eq!(code(&["eval", "--seed", "1", "--env", "moon"]), Some(1));
    assert_eq!(code(&["frobnicate"]), Some(1));
}

#[test]
fn missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cseal(dir.path(), &["train-dkt", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(cseal(dir.path(), &["eval", "--seed", "1", "--method", "cog"]).status.code(), Some(2));
}

#[test]
fn baselines_cannot_be_trained() {
    let dir = prepared();
    for m in ["cog", "cn-random", "mcs-10"] {
        let out = cseal(dir.path(), &["train-agent", "--seed", "3", "--method", m]);
        assert_eq!(out.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&out.stderr).contains("requires no training"), "{m}");
    }
}

#[test]
fn gen_data_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["gen-data", "--seed", "9", "--sessions", "50"]);
    ok(b.path(), &["gen-data", "--seed", "9", "--sessions", "50"]);
    let text = std::fs::read_to_string(a.path().join("sessions.tsv")).unwrap();
    assert_eq!(text, std::fs::read_to_string(b.path().join("sessions.tsv")).unwrap());
    assert!(text.starts_with("# command=gen-data\n"));
    assert_eq!(parse_sessions(&text).unwrap().len(), 50);

    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["gen-data", "--seed", "10", "--sessions", "50"]);
    assert_ne!(text, std::fs::read_to_string(c.path().join("sessions.tsv")).unwrap());
}

#[test]
fn config_file_env_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# small run\nsessions = 7\nseed = 1\n").unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_cseal"));
        cmd.args(["gen-data", "--config"]).arg(&conf).args(extra).arg("--out").arg(dir.path());
        cmd.env_clear().env("RUST_LOG", "error");
        if let Some(v) = env {
            cmd.env("CSEAL_SESSIONS", v);
        }
        assert!(cmd.status().unwrap().success());
        parse_sessions(&std::fs::read_to_string(dir.path().join("sessions.tsv")).unwrap()).unwrap().len()
    };
    assert_eq!(run(&[], None), 7);
    assert_eq!(run(&[], Some("8")), 8);
    assert_eq!(run(&["--set", "sessions=9"], Some("8")), 9);
    assert_eq!(run(&["--sessions", "10", "--set", "sessions=9"], Some("8")), 10);
}

#[test]
fn dkt_checkpoint_reproduces_validation_loss() {
    let dir = prepared();
    let metrics: Vec<Value> = lines(&dir.path().join("dkt_metrics.jsonl"))
        .iter()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(metrics[0]["command"], "train-dkt");
    let summary = metrics.last().unwrap();
    let best = summary["best_epoch"].as_u64().unwrap();
    let recorded = metrics[1..metrics.len() - 1]
        .iter()
        .find(|e| e["epoch"].as_u64() == Some(best))
        .unwrap()["valid_loss"]
        .as_f64()
        .unwrap();

    let sessions = parse_sessions(&std::fs::read_to_string(dir.path().join("sessions.tsv")).unwrap()).unwrap();
    let split = split_dataset(&sessions, [0.8, 0.1, 0.1], rngs::derive_seed(3, "split", &[])).unwrap();
    assert_eq!(summary["validation_sessions"].as_u64(), Some(split.validation.len() as u64));
    let valid: Vec<_> = split.validation.iter().map(|s| s.records.clone()).collect();
    let model = DktModel::load(dir.path().join("dkt.ckpt")).unwrap();
    let (loss, _) = model.evaluate(&valid).unwrap();
    assert!((loss - recorded).abs() <= 1e-9, "{loss} vs {recorded}");
}

#[test]
fn eval_writes_one_line_per_episode() {
    let dir = prepared();
    let stdout = ok(dir.path(), &["eval", "--seed", "3", "--method", "cog", "--episodes", "500"]);
    assert!(stdout.contains("cog"));
    let out = lines(&dir.path().join("eval-cog.jsonl"));
    // header, episodes, summary
    assert_eq!(out.len(), 1 + 500 + 1);
    let first: Value = serde_json::from_str(&out[1]).unwrap();
    let ep = first["ep"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&ep));
    assert_eq!(first["path"].as_array().unwrap().len(), 20);
    let summary: Value = serde_json::from_str(out.last().unwrap()).unwrap();
    assert_eq!(summary["episodes"].as_u64(), Some(500));
    assert!(summary["ci_low"].as_f64() <= summary["mean"].as_f64());
}

#[test]
fn train_then_eval_and_sweep() {
    let dir = prepared();
    ok(dir.path(), &["train-agent", "--seed", "3", "--method", "cseal", "--epochs", "6"]);
    let curve = lines(&dir.path().join("curve-cseal.jsonl"));
    assert_eq!(curve.len(), 1 + 6);
    assert!(dir.path().join("curve-cseal.timing.jsonl").exists());
    assert!(dir.path().join("agent-cseal.ckpt").exists());

    ok(dir.path(), &["eval", "--seed", "3", "--method", "cseal", "--episodes", "10"]);
    ok(dir.path(), &["sweep-length", "--seed", "3", "--method", "cseal", "--episodes", "5", "--lengths", "5,10,20"]);
    let rows = lines(&dir.path().join("sweep-cseal.csv"));
    let data: Vec<&String> = rows.iter().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "length,mean_ep,stderr,episodes");
    let lengths: Vec<&str> = data[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(lengths, ["5", "10", "20"]);
}

#[test]
fn show_path_grammar() {
    let dir = prepared();
    ok(dir.path(), &["train-agent", "--seed", "3", "--method", "cseal", "--epochs", "2"]);
    let stdout = ok(dir.path(), &["show-path", "--seed", "3", "--method", "cseal", "--episodes", "2", "--set", "path_len=4"]);
    let file = std::fs::read_to_string(dir.path().join("paths-cseal.txt")).unwrap();
    assert!(file.ends_with(&stdout) || file.contains(stdout.trim()));
    let body: Vec<&str> = file.lines().filter(|l| !l.starts_with('#')).collect();
    // per episode: header, history, 4 steps, path
    assert_eq!(body.len(), 2 * 7);
    for ep in body.chunks(7) {
        assert!(ep[0].starts_with("episode ") && ep[0].contains(" target=") && ep[0].contains(" ep="));
        assert!(ep[1].starts_with("history "));
        for (i, step) in ep[2..6].iter().enumerate() {
            assert!(step.starts_with(&format!("step {i} item=")), "{step}");
            let role = step.split(" role=").nth(1).unwrap().split(' ').next().unwrap();
            assert!(["target", "prereq", "other"].contains(&role));
            assert!(step.contains(" candidates="));
        }
        assert!(ep[6].starts_with("path "));
        assert_eq!(ep[6].split_whitespace().count(), 1 + 4);
    }
}

#[test]
fn kes_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let env_model = dir.path().join("env_dkt.ckpt");
    let env_model = env_model.to_str().unwrap();
    ok(dir.path(), &["gen-data", "--seed", "4", "--sessions", "120"]);
    let small = ["--env", "kes", "--set", "dkt.max_epochs=2"];
    ok(dir.path(), &[&["train-dkt", "--seed", "4"][..], &small].concat());
    ok(dir.path(), &[&["train-dkt", "--seed", "44", "--set"][..], &[&format!("kt={env_model}")], &small].concat());
    ok(dir.path(), &["train-agent", "--seed", "4", "--env", "kes", "--epochs", "2"]);
    ok(dir.path(), &["eval", "--seed", "4", "--env", "kes", "--episodes", "8"]);
    assert_eq!(lines(&dir.path().join("eval-cseal.jsonl")).len(), 1 + 8 + 1);
    let out = cseal(dir.path(), &["gen-data", "--seed", "4", "--env", "kes"]);
    assert_eq!(out.status.code(), Some(1));
}
