//! Flat `key=value` experiment configuration.
//!
//! Values are layered: built-in defaults, then the config file, then
//! `CSEAL_*` environment variables, then command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const ENV_PREFIX: &str = "CSEAL_";

struct Key {
    name: &'static str,
    default: Option<&'static str>,
    /// Excluded from the echoed header: paths and worker counts do not
    /// change results.
    runtime: bool,
}

const fn key(name: &'static str, default: &'static str) -> Key {
    Key { name, default: Some(default), runtime: false }
}

const fn path(name: &'static str) -> Key {
    Key { name, default: None, runtime: true }
}

const KEYS: &[Key] = &[
    key("env", "kss"),
    Key { name: "seed", default: None, runtime: false },
    key("method", "cseal"),
    // simulator
    key("kss.g_max", "0.3"),
    key("kss.tau", "0.6"),
    key("kss.init_max", "0.6"),
    key("kss.skip", "0.9"),
    key("kss.discrimination", "1"),
    key("kss.guessing", "0.1"),
    key("kss.max_target", "3"),
    key("kes.skip", "0.9"),
    // data
    key("sessions", "4000"),
    key("max_len", "50"),
    key("split", "0.8,0.1,0.1"),
    // knowledge tracing; empty means the environment profile default
    key("dkt.embed_dim", ""),
    key("dkt.hidden_dim", ""),
    key("dkt.lr", "0.001"),
    key("dkt.batch", "16"),
    key("dkt.max_epochs", "50"),
    key("dkt.patience", "3"),
    key("dkt.embed_dropout", "0.2"),
    key("dkt.lstm_dropout", "0.5"),
    key("dkt.clip", "5"),
    // agent
    key("gamma", "0.99"),
    key("alpha", "1"),
    key("beta", "0.1"),
    key("path_len", "20"),
    key("lr", "0.005"),
    key("entropy", "0"),
    key("epochs", "312"),
    key("batch", "16"),
    key("clip", "5"),
    key("hidden", "128,32"),
    key("dropout", "0"),
    key("hops", "2"),
    // evaluation
    key("episodes", "500"),
    key("greedy", "false"),
    key("lengths", "5,10,20,30,40"),
    // files
    path("out"),
    path("graph"),
    path("names"),
    path("logs"),
    path("data"),
    path("kt"),
    path("agent"),
    path("env_model"),
    path("episodes_data"),
    Key { name: "jobs", default: None, runtime: true },
];

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Config {
    pub fn defaults() -> Self {
        let values = KEYS
            .iter()
            .filter_map(|k| k.default.map(|d| (k.name, d.to_string())))
            .collect();
        Config { values }
    }

    fn lookup(name: &str) -> Option<&'static Key> {
        KEYS.iter().find(|k| k.name == name)
    }

    pub fn set(&mut self, name: &str, value: &str) -> anyhow::Result<()> {
        match Self::lookup(name) {
            Some(k) => {
                self.values.insert(k.name, value.trim().to_string());
                Ok(())
            }
            None => usage(format!("unknown config key `{name}`")),
        }
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> anyhow::Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return usage(format!("config line {}: expected key=value", i + 1));
            };
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// `CSEAL_DKT_LR` overrides `dkt.lr`, and so on.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> anyhow::Result<()> {
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
            let wanted = rest.to_ascii_lowercase();
            let found = KEYS
                .iter()
                .find(|k| k.name.replace('.', "_") == wanted);
            match found {
                Some(k) => self.set(k.name, &value)?,
                None => log::warn!("ignoring unknown variable {name}"),
            }
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, pairs: &[String]) -> anyhow::Result<()> {
        for p in pairs {
            let Some((k, v)) = p.split_once('=') else {
                return usage(format!("override `{p}` is not key=value"));
            };
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn raw(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn get<T: FromStr>(&self, name: &str) -> anyhow::Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.raw(name) {
            Some(v) => v
                .parse()
                .or_else(|e| usage(format!("bad value `{v}` for `{name}`: {e}"))),
            None => usage(format!("missing required config `{name}`")),
        }
    }

    pub fn get_opt<T: FromStr>(&self, name: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(name) {
            Some(_) => self.get(name).map(Some),
            None => Ok(None),
        }
    }

    pub fn list<T: FromStr>(&self, name: &str) -> anyhow::Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(name).unwrap_or("");
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().or_else(|e| usage(format!("bad list entry `{s}` for `{name}`: {e}"))))
            .collect()
    }

    pub fn seed(&self) -> anyhow::Result<u64> {
        match self.raw("seed") {
            Some(_) => self.get("seed"),
            None => usage("a seed is required (--seed or seed=...)"),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out").unwrap_or("."))
    }

    /// Configured path, or `default_name` inside the output directory.
    pub fn path_or(&self, name: &str, default_name: &str) -> PathBuf {
        self.raw(name)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.out_dir().join(default_name))
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.raw(name).map(PathBuf::from)
    }

    /// Result-affecting settings as sorted `key=value` pairs.
    pub fn echo(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .filter(|k| !k.runtime)
            .filter_map(|k| self.values.get(k.name).map(|v| (k.name.to_string(), v.clone())))
            .collect()
    }
}
