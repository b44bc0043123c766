//! Feature files: a text header terminated by a blank line, then the tensor
//! payload as row-major little-endian `f64`.
//!
//! ```text
//! AMFFEAT
//! version=1
//! dtype=f64le
//! shape=16,8
//!
//! <payload>
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &str = "AMFFEAT";
pub const FEATURE_VERSION: u32 = 1;

pub fn encode_features(t: &Tensor) -> Vec<u8> {
    let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
    let mut out = format!(
        "{MAGIC}\nversion={FEATURE_VERSION}\ndtype=f64le\nshape={}\n\n",
        shape.join(",")
    )
    .into_bytes();
    out.reserve(t.len() * 8);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "feature file",
        detail: detail.into(),
    }
}

pub fn decode_features(bytes: &[u8]) -> Result<Tensor> {
    let mut rest = bytes;
    let mut next_line = || -> Result<&str> {
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("unterminated header"))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8"))?;
        rest = &rest[end + 1..];
        Ok(line)
    };
    if next_line()? != MAGIC {
        return Err(bad("missing magic"));
    }
    let (mut version, mut dtype, mut shape) = (None, None, None);
    loop {
        let line = next_line()?;
        if line.is_empty() {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("bad header line `{line}`")))?;
        match key {
            "version" => version = Some(value.parse::<u32>().map_err(|_| bad("bad version"))?),
            "dtype" => dtype = Some(value.to_string()),
            "shape" => {
                shape = Some(
                    value
                        .split(',')
                        .map(|d| {
                            d.parse::<usize>()
                                .map_err(|_| bad(format!("bad extent `{d}`")))
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            other => return Err(bad(format!("unknown header key `{other}`"))),
        }
    }
    let version = version.ok_or_else(|| bad("missing version"))?;
    if version != FEATURE_VERSION {
        return Err(Error::UnknownVersion {
            what: "feature file",
            found: version,
            expected: FEATURE_VERSION,
        });
    }
    if dtype.as_deref() != Some("f64le") {
        return Err(bad(format!("unsupported dtype {dtype:?}")));
    }
    let shape = shape.ok_or_else(|| bad("missing shape"))?;
    let n: usize = shape.iter().product();
    if rest.len() != n * 8 {
        return Err(bad(format!(
            "payload has {} bytes, shape {shape:?} needs {}",
            rest.len(),
            n * 8
        )));
    }
    let data = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::new(shape, data)
}

pub fn write_features(path: &Path, t: &Tensor) -> Result<()> {
    fs::write(path, encode_features(t)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
