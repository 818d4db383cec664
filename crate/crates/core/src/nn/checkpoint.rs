//! Named-tensor container.
//!
//! Layout: a UTF-8 manifest of `meta key=value` and `tensor name d0xd1...`
//! lines, terminated by a line reading `data`, followed by every tensor's
//! values as little-endian `f64` in manifest order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

const MAGIC: &str = "# cseal-checkpoint v1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, meta: BTreeMap<String, String>) -> Self {
        let tensors = store
            .ids()
            .map(|id| (store.name(id).to_string(), store.get(id).clone()))
            .collect();
        Checkpoint { meta, tensors }
    }

    pub fn meta_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("bad value for `{key}`: {raw}")))
    }

    /// Copies tensors into `store`, matching by name and shape.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (name, tensor) in &self.tensors {
            let id = store
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor `{name}`")))?;
            if store.get(id).shape() != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    tensor.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = tensor.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            header.push_str(&format!("meta {k}={v}\n"));
        }
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            header.push_str(&format!("tensor {name} {}\n", dims.join("x")));
        }
        header.push_str("data\n");
        let mut out = header.into_bytes();
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut line_no = 0;
        let mut next_line = |pos: &mut usize| -> Result<String> {
            line_no += 1;
            let rest = &bytes[*pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Checkpoint("truncated manifest".into()))?;
            *pos += end + 1;
            String::from_utf8(rest[..end].to_vec())
                .map_err(|_| Error::Checkpoint(format!("manifest line {line_no} is not UTF-8")))
        };
        if next_line(&mut pos)? != MAGIC {
            return Err(Error::Checkpoint("missing checkpoint magic line".into()));
        }
        let mut ckpt = Checkpoint::default();
        let mut shapes = Vec::new();
        loop {
            let line = next_line(&mut pos)?;
            if line == "data" {
                break;
            } else if let Some(kv) = line.strip_prefix("meta ") {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Checkpoint(format!("bad meta line `{line}`")))?;
                ckpt.meta.insert(k.to_string(), v.to_string());
            } else if let Some(spec) = line.strip_prefix("tensor ") {
                let (name, dims) = spec
                    .rsplit_once(' ')
                    .ok_or_else(|| Error::Checkpoint(format!("bad tensor line `{line}`")))?;
                let shape = dims
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Checkpoint(format!("bad shape in `{line}`")))?;
                shapes.push((name.to_string(), shape));
            } else {
                return Err(Error::Checkpoint(format!("unexpected manifest line `{line}`")));
            }
        }
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            let need = n * 8;
            if bytes.len() < pos + need {
                return Err(Error::Checkpoint(format!("data for `{name}` is truncated")));
            }
            let values = bytes[pos..pos + need]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            pos += need;
            ckpt.tensors.push((name, Tensor::from_vec(&shape, values)?));
        }
        if pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
        }
        Ok(ckpt)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
