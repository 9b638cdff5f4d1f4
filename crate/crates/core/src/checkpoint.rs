//! Binary parameter checkpoints.
//!
//! All integers little-endian:
//!
//! ```text
//! magic        8 bytes  "TWFMCKPT"
//! version      u32      1
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON (CheckpointHeader)
//! count        u32      number of tensors
//! count × {
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   rank       u32
//!   dims       rank × u64
//!   data       prod(dims) × f64
//! }
//! ```
//!
//! Nothing may follow the last tensor.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::MinMaxScaler;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TwinFormer, TwinFormerParams, TwinFormerWeights};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"TWFMCKPT";
pub const VERSION: u32 = 1;

/// How the model's inputs relate to a data source, so a checkpoint can be
/// applied to raw values later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBinding {
    /// Feature columns in model input order.
    pub columns: Vec<String>,
    pub target_column: String,
    pub scaler: MinMaxScaler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    #[serde(default)]
    pub data: Option<DataBinding>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TwinFormer,
    pub data: Option<DataBinding>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = CheckpointHeader {
            model: self.model.config,
            data: self.data.clone(),
        };
        let json = serde_json::to_vec(&header)
            .map_err(|e| Error::Checkpoint(format!("encoding header: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let slots = self.model.params.slots();
        out.extend_from_slice(&(slots.len() as u32).to_le_bytes());
        for (name, t) in slots {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (expected {VERSION})"
            )));
        }
        let header_len = r.len_u64("header length")?;
        let header: CheckpointHeader = serde_json::from_slice(r.take(header_len, "header")?)
            .map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;
        header
            .model
            .validate()
            .map_err(|e| Error::Checkpoint(format!("header holds an invalid model config: {e}")))?;
        if let Some(data) = &header.data {
            data.check(&header.model)?;
        }

        let expected = TwinFormerWeights::shapes(&header.model);
        let mut wanted: HashMap<String, Vec<usize>> = expected
            .slots()
            .into_iter()
            .map(|(n, s)| (n, s.clone()))
            .collect();
        let count = r.u32("tensor count")? as usize;
        if count != wanted.len() {
            return Err(Error::Checkpoint(format!(
                "{count} tensors, expected {}",
                wanted.len()
            )));
        }
        let mut found = HashMap::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let Some(shape) = wanted.remove(&name) else {
                let why = if found.contains_key(&name) {
                    "duplicate"
                } else {
                    "unexpected"
                };
                return Err(Error::Checkpoint(format!("{why} tensor '{name}'")));
            };
            let rank = r.u32("rank")? as usize;
            let dims = (0..rank)
                .map(|_| r.len_u64("dimension"))
                .collect::<Result<Vec<_>>>()?;
            if dims != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor '{name}' has shape {dims:?}, config requires {shape:?}"
                )));
            }
            let numel: usize = dims.iter().product();
            let raw = r.take(numel * 8, "tensor data")?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!(
                    "tensor '{name}' holds non-finite values"
                )));
            }
            found.insert(name, Tensor::new(dims, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let params: TwinFormerParams = expected.try_map(&mut |name, _| {
            found
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))
        })?;
        Ok(Checkpoint {
            model: TwinFormer::from_parts(header.model, params)?,
            data: header.data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

impl DataBinding {
    fn check(&self, model: &ModelConfig) -> Result<()> {
        let f = model.n_features;
        if self.columns.len() != f || self.scaler.min.len() != f || self.scaler.max.len() != f {
            return Err(Error::Checkpoint(format!(
                "data binding lists {} columns and {} scaler entries for a {f}-feature model",
                self.columns.len(),
                self.scaler.min.len()
            )));
        }
        if self.columns.get(model.target_index) != Some(&self.target_column) {
            return Err(Error::Checkpoint(format!(
                "target column '{}' is not feature {} of {:?}",
                self.target_column, model.target_index, self.columns
            )));
        }
        let bad_range = self
            .scaler
            .min
            .iter()
            .zip(&self.scaler.max)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b));
        if bad_range {
            return Err(Error::Checkpoint(
                "scaler ranges must be finite with min ≤ max".into(),
            ));
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "truncated while reading {what} at byte {}",
                    self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    /// A u64 that must also fit the remaining input as a length.
    fn len_u64(&mut self, what: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes"));
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("{what} {v} exceeds the file size")))
    }
}
