//! Binary parameter snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DARQ" | version u32 | architecture id u32
//! repeated: name_len u32 | name bytes | rank u32 | dims u32 × rank | f64 × prod(dims)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agent::{AgentError, Architecture, Model, ModelSpec};
use crate::numerics::{ParameterSet, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DARQ";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad checkpoint: magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("bad checkpoint: unsupported format version {0}")]
    Version(u32),
    #[error("bad checkpoint: unknown architecture id {0}")]
    UnknownArchitecture(u32),
    #[error("bad checkpoint: truncated at byte {0}")]
    Truncated(usize),
    #[error("bad checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint architecture {found} does not match configured {expected}")]
    ArchitectureMismatch {
        expected: Architecture,
        found: Architecture,
    },
    #[error("checkpoint {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Decoded checkpoint contents.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub params: ParameterSet,
}

pub fn checkpoint_to_bytes(arch: Architecture, params: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + params.scalar_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&arch.id().to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = match r.take(4) {
        Ok(m) => m.try_into().expect("4 bytes"),
        Err(_) => {
            let mut m = [0u8; 4];
            m[..bytes.len()].copy_from_slice(bytes);
            return Err(CheckpointError::BadMagic(m));
        }
    };
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let arch_id = r.u32()?;
    let arch =
        Architecture::from_id(arch_id).ok_or(CheckpointError::UnknownArchitecture(arch_id))?;
    let mut params = ParameterSet::new();
    while !r.done() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Malformed("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::Malformed(format!("shape {shape:?} overflows")))?;
        let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated(r.pos))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor =
            Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        params
            .insert(&name, tensor)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    }
    Ok(Checkpoint { arch, params })
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, checkpoint_to_bytes(model.arch(), model.params())).map_err(|e| {
        CheckpointError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    checkpoint_from_bytes(&bytes)
}

/// Loads a checkpoint and checks it against `spec` (architecture, names and shapes).
pub fn load_model(path: &Path, spec: ModelSpec) -> Result<Model, CheckpointError> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.arch != spec.arch {
        return Err(CheckpointError::ArchitectureMismatch {
            expected: spec.arch,
            found: ckpt.arch,
        });
    }
    Ok(Model::from_params(spec, ckpt.params)?)
}
