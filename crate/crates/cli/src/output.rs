//! Deterministic output files with a config echo.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::Config;

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// `# key=value` lines for text and CSV outputs.
pub fn text_header(command: &str, cfg: &Config) -> String {
    let mut s = format!("# command={command}\n");
    for (k, v) in cfg.echo() {
        s.push_str(&format!("# {k}={v}\n"));
    }
    s
}

/// First line of every JSON-lines output.
pub fn json_header(command: &str, cfg: &Config) -> Value {
    let config: Map<String, Value> = cfg.echo().into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    json!({ "command": command, "config": config })
}

pub struct JsonLines {
    out: BufWriter<File>,
    path: PathBuf,
}

impl JsonLines {
    pub fn create(path: &Path, command: &str, cfg: &Config) -> anyhow::Result<Self> {
        let mut j = JsonLines {
            out: create(path)?,
            path: path.to_path_buf(),
        };
        j.write(&json_header(command, cfg))?;
        Ok(j)
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> anyhow::Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        self.out
            .flush()
            .with_context(|| format!("writing {}", self.path.display()))
    }
}

/// Wall-clock sidecar kept apart from the reproducible metrics.
pub struct Timing {
    start: Instant,
    out: BufWriter<File>,
}

impl Timing {
    pub fn beside(metrics: &Path) -> anyhow::Result<Self> {
        let mut name = metrics.file_stem().unwrap_or_default().to_os_string();
        name.push(".timing.jsonl");
        Ok(Timing {
            start: Instant::now(),
            out: create(&metrics.with_file_name(name))?,
        })
    }

    pub fn mark(&mut self, label: &str, index: usize) -> anyhow::Result<()> {
        let line = json!({ "label": label, "index": index, "wall_seconds": self.start.elapsed().as_secs_f64() });
        serde_json::to_writer(&mut self.out, &line)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
