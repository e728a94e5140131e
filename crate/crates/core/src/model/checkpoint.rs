use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{expected_shapes, Model, ModelConfig};
use crate::autodiff::{ParamSet, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub best_val_accuracy: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Index of the first value in the float section.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    params: Vec<ParamEntry>,
    metadata: CheckpointMeta,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::TruncatedCheckpoint(format!(
                "{what} needs {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl ModelCheckpoint {
    pub fn new(model: Model, meta: CheckpointMeta) -> Self {
        Self { model, meta }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.model.params.len());
        let mut offset = 0;
        for (name, t) in self.model.params.iter() {
            entries.push(ParamEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += t.numel();
        }
        let header = serde_json::to_vec(&Header {
            config: self.model.config,
            params: entries,
            metadata: self.meta,
        })?;
        let mut out = Vec::with_capacity(12 + header.len() + 4 * offset);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in self.model.params.iter() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = cur.u32("format version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = cur.u32("header length")? as usize;
        let header: Header = serde_json::from_slice(cur.take(header_len, "header")?)
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;

        let expected = expected_shapes(&header.config);
        for entry in &header.params {
            match expected.get(&entry.name) {
                Some(shape) if *shape == entry.shape => {}
                Some(shape) => {
                    return Err(Error::CheckpointShape {
                        name: entry.name.clone(),
                        found: entry.shape.clone(),
                        expected: shape.clone(),
                    })
                }
                None => return Err(Error::Checkpoint(format!("unexpected parameter `{}`", entry.name))),
            }
        }
        if let Some(missing) = expected.keys().find(|k| !header.params.iter().any(|e| &e.name == *k)) {
            return Err(Error::Checkpoint(format!("missing parameter `{missing}`")));
        }

        let total: usize = header.params.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        let data_start = cur.pos;
        let floats = cur.take(4 * total, "parameter data")?;
        if cur.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after parameter data",
                bytes.len() - cur.pos
            )));
        }
        let mut params = ParamSet::new();
        let mut next = 0;
        for entry in header.params {
            let n: usize = entry.shape.iter().product();
            if entry.offset != next {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` offset {} (expected {next})",
                    entry.name, entry.offset
                )));
            }
            let data = floats[4 * next..4 * (next + n)]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            params.insert(entry.name, Tensor::new(entry.shape, data)?)?;
            next += n;
        }
        debug_assert_eq!(data_start + 4 * next, bytes.len());
        Ok(Self {
            model: Model {
                config: header.config,
                params,
            },
            meta: header.metadata,
        })
    }

    /// Writes via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
