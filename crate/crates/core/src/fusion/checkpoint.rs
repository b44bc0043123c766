//! Model checkpoints: a short text preamble, a JSON header with the config
//! and tensor table, then every tensor as little-endian `f64` in store order.
//!
//! ```text
//! AMFCKPT
//! version=1
//! header_bytes=<n>
//! <n bytes of JSON>
//! <payload>
//! ```

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{FusionModel, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

const MAGIC: &str = "AMFCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        detail: detail.into(),
    }
}

pub fn write_checkpoint(model: &FusionModel, mut w: impl Write) -> std::io::Result<()> {
    let header = Header {
        config: model.config().clone(),
        tensors: model
            .params()
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    write!(
        w,
        "{MAGIC}\nversion={CHECKPOINT_VERSION}\nheader_bytes={}\n",
        json.len()
    )?;
    w.write_all(&json)?;
    for t in model.params().tensors() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_line(r: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| bad(e.to_string()))?;
    if !line.ends_with('\n') {
        return Err(bad("truncated preamble"));
    }
    line.pop();
    Ok(line)
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| bad(format!("expected `{key}=...`, found `{line}`")))
}

pub fn read_checkpoint(mut r: impl BufRead) -> Result<FusionModel> {
    if read_line(&mut r)? != MAGIC {
        return Err(bad("missing magic"));
    }
    let version: u32 = field(&read_line(&mut r)?, "version")?
        .parse()
        .map_err(|_| bad("bad version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnknownVersion {
            what: "checkpoint",
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let n: usize = field(&read_line(&mut r)?, "header_bytes")?
        .parse()
        .map_err(|_| bad("bad header length"))?;
    let mut json = vec![0u8; n];
    r.read_exact(&mut json).map_err(|e| bad(e.to_string()))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;

    let mut store = ParamStore::new();
    for entry in header.tensors {
        let len: usize = entry.shape.iter().product();
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)
            .map_err(|_| bad(format!("payload truncated in `{}`", entry.name)))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.add(entry.name, Tensor::new(entry.shape, data)?);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| bad(e.to_string()))?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    FusionModel::from_parts(header.config, store)
}

pub fn save_checkpoint(model: &FusionModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<FusionModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(bytes.as_slice())
}
