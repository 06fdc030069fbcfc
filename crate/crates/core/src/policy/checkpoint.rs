//! Binary checkpoints with a JSON sidecar.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"HEATPOL1"            magic
//! u8                     architecture tag (1 recurrent, 2 modular, 3 feedforward)
//! u32                    number of shape fields (5)
//! u64 x 5                obs, actions, hidden, memory, message
//! u64                    parameter count
//! f64 x count            parameters
//! ```
//!
//! The sidecar `<file>.json` records the architecture, widths, init seed and
//! whatever hyperparameters the writer wants to keep next to the weights.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Architecture, Policy, PolicySizes};
use crate::error::{HeatError, Result};

const MAGIC: &[u8; 8] = b"HEATPOL1";
const SHAPE_FIELDS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub arch: Architecture,
    pub sizes: PolicySizes,
    pub init_seed: u64,
    pub train_seed: u64,
    #[serde(default)]
    pub hyperparameters: serde_json::Value,
}

pub fn write_checkpoint(policy: &Policy) -> Vec<u8> {
    let s = policy.sizes();
    let mut out = Vec::with_capacity(8 + 1 + 4 + 6 * 8 + policy.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.push(policy.arch().tag());
    out.extend_from_slice(&SHAPE_FIELDS.to_le_bytes());
    for dim in [s.obs, s.actions, s.hidden, s.memory, s.message] {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    out.extend_from_slice(&(policy.param_count() as u64).to_le_bytes());
    for w in policy.theta() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| HeatError::Checkpoint("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?)
            .map_err(|_| HeatError::Checkpoint("dimension overflows usize".into()))
    }
}

/// Parse checkpoint bytes. `seed` is the init seed to attach to the policy.
pub fn read_checkpoint(bytes: &[u8], seed: u64) -> Result<Policy> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(HeatError::Checkpoint(
            "bad magic, not a policy checkpoint".into(),
        ));
    }
    let tag = r.take(1)?[0];
    let arch = Architecture::from_tag(tag)
        .ok_or_else(|| HeatError::Checkpoint(format!("unknown architecture tag {tag}")))?;
    let fields = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if fields != SHAPE_FIELDS {
        return Err(HeatError::Checkpoint(format!(
            "expected {SHAPE_FIELDS} shape fields, found {fields}"
        )));
    }
    let sizes = PolicySizes {
        obs: r.usize()?,
        actions: r.usize()?,
        hidden: r.usize()?,
        memory: r.usize()?,
        message: r.usize()?,
    };
    let count = r.usize()?;
    let mut policy =
        Policy::zeroed(arch, sizes, seed).map_err(|e| HeatError::Checkpoint(e.to_string()))?;
    if count != policy.param_count() {
        return Err(HeatError::Checkpoint(format!(
            "header says {count} parameters, shapes imply {}",
            policy.param_count()
        )));
    }
    let raw = r.take(
        count
            .checked_mul(8)
            .ok_or_else(|| HeatError::Checkpoint("parameter count overflows".into()))?,
    )?;
    if r.pos != bytes.len() {
        return Err(HeatError::Checkpoint(
            "trailing bytes after parameters".into(),
        ));
    }
    let theta = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    policy
        .set_theta(theta)
        .map_err(|e| HeatError::Checkpoint(e.to_string()))?;
    Ok(policy)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Write `path` and its `<path>.json` sidecar.
pub fn save_checkpoint(
    path: &Path,
    policy: &Policy,
    train_seed: u64,
    hyperparameters: serde_json::Value,
) -> Result<()> {
    fs::write(path, write_checkpoint(policy))?;
    let meta = CheckpointMeta {
        arch: policy.arch(),
        sizes: *policy.sizes(),
        init_seed: policy.seed(),
        train_seed,
        hyperparameters,
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(sidecar_path(path), text)?;
    Ok(())
}

/// Read a checkpoint and its sidecar; the two must describe the same network.
pub fn load_checkpoint(path: &Path) -> Result<(Policy, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let policy = read_checkpoint(&fs::read(path)?, meta.init_seed)?;
    if policy.arch() != meta.arch || *policy.sizes() != meta.sizes {
        return Err(HeatError::Checkpoint(
            "sidecar disagrees with checkpoint header".into(),
        ));
    }
    Ok((policy, meta))
}
