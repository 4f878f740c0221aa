//! Binary checkpoints.
//!
//! Layout, little-endian:
//!
//! ```text
//! magic "STARFCKP" | version u32 | config hash [32]
//! config json: len u64, bytes | metadata json: len u64, bytes
//! tensor count u64 | per tensor: name len u32, name, ndim u32, dims u64 x ndim, data f64 x numel
//! sha256 of everything above [32]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use starformer_core::centrality::Provenance;
use starformer_core::kernel::Tensor;
use starformer_core::model::{ModelConfig, ModelState};

use crate::error::{Error, Result};
use crate::formats::{read_bytes, write_bytes};

const MAGIC: &[u8; 8] = b"STARFCKP";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to use a model on raw data besides its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub fold: Option<usize>,
    pub best_epoch: Option<usize>,
    /// Atlas ROI ids in file order.
    pub roi_ids: Vec<String>,
    /// Position `i` of the model input holds atlas ROI `ordering[i]`.
    pub ordering: Vec<usize>,
    pub ordering_provenance: Provenance,
    pub temporal_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    pub meta: CheckpointMeta,
}

pub fn config_hash(cfg: &ModelConfig) -> [u8; 32] {
    Sha256::digest(serde_json::to_vec(cfg).expect("serialisable config")).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let cfg = serde_json::to_vec(ck.state.config()).expect("serialisable config");
    let meta = serde_json::to_vec(&ck.meta).expect("serialisable metadata");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&config_hash(ck.state.config()));
    for blob in [&cfg, &meta] {
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(blob);
    }
    out.extend_from_slice(&(ck.state.params().len() as u64).to_le_bytes());
    for (name, t) in ck.state.param_names().zip(ck.state.params()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest: [u8; 32] = Sha256::digest(&out).into();
    out.extend_from_slice(&digest);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(integrity(self.path, "unexpected end of data"));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| integrity(self.path, "length overflows"))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let len = self.len()?;
        self.take(len)
    }
}

fn integrity(path: &Path, detail: impl Into<String>) -> Error {
    Error::Integrity {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Verifies the checksum and, when `expected` is given, that the stored
/// model configuration is the same one.
pub fn decode_checkpoint(bytes: &[u8], path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 + 32 + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(integrity(path, "not a checkpoint or truncated header"));
    }
    let (body, stored_digest) = bytes.split_at(bytes.len() - 32);
    let digest: [u8; 32] = Sha256::digest(body).into();
    if digest[..] != stored_digest[..] {
        return Err(integrity(path, "checksum mismatch (corrupt or truncated file)"));
    }
    let mut c = Cursor {
        bytes: body,
        pos: MAGIC.len(),
        path,
    };
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(integrity(path, format!("unsupported format version {version}")));
    }
    let stored_hash: [u8; 32] = c.take(32)?.try_into().expect("32 bytes");
    let cfg_bytes = c.blob()?;
    let meta_bytes = c.blob()?;
    let config: ModelConfig =
        serde_json::from_slice(cfg_bytes).map_err(|e| integrity(path, format!("model config: {e}")))?;
    if config_hash(&config) != stored_hash {
        return Err(integrity(path, "stored config does not match its hash"));
    }
    if let Some(want) = expected {
        let want_hash = config_hash(want);
        if want_hash != stored_hash {
            return Err(Error::ConfigMismatch {
                path: path.to_path_buf(),
                expected: hex(&want_hash),
                found: hex(&stored_hash),
            });
        }
    }
    let meta: CheckpointMeta =
        serde_json::from_slice(meta_bytes).map_err(|e| integrity(path, format!("metadata: {e}")))?;

    let count = c.len()?;
    let mut names = Vec::new();
    let mut params = Vec::new();
    for _ in 0..count.min(1 << 20) {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?).map_err(|_| integrity(path, "tensor name is not UTF-8"))?;
        let ndim = c.u32()? as usize;
        let shape = (0..ndim).map(|_| c.len()).collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| integrity(path, "tensor size overflows"))?;
        let raw = c.take(numel.checked_mul(8).ok_or_else(|| integrity(path, "tensor size overflows"))?)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        names.push(name.to_owned());
        params.push(Tensor::new(shape, data).map_err(|e| integrity(path, format!("tensor {name}: {e}")))?);
    }
    if c.pos != body.len() {
        return Err(integrity(path, "trailing bytes after tensors"));
    }
    let state = ModelState::from_params(config, params).map_err(|e| integrity(path, e.to_string()))?;
    if let Some((want, got)) = state.param_names().zip(&names).find(|(a, b)| a != b) {
        return Err(integrity(path, format!("tensor {got} stored where {want} belongs")));
    }
    if meta.roi_ids.len() != state.config().n_rois || meta.ordering.len() != state.config().n_rois {
        return Err(integrity(path, "metadata ROI count differs from the model"));
    }
    Ok(Checkpoint { state, meta })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_bytes(path, &encode_checkpoint(ck))
}

pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    decode_checkpoint(&read_bytes(path)?, path, expected)
}
