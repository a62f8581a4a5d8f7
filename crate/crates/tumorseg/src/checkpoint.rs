//! Model checkpoints.
//!
//! Layout: the 8-byte magic `TSEGCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header carrying the
//! [`UNetConfig`], then every parameter as a little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tumorseg_core::{UNet, UNetConfig};

use crate::error::{Error, Result};
use crate::io::write_file;

const MAGIC: &[u8; 8] = b"TSEGCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub unet: UNetConfig,
    pub param_count: usize,
    /// Epoch whose weights are stored.
    pub epoch: usize,
}

pub fn encode(model: &UNet, epoch: usize) -> Vec<u8> {
    let header = CheckpointHeader {
        unet: model.config().clone(),
        param_count: model.parameter_count(),
        epoch,
    };
    let json = serde_json::to_vec(&header).expect("header always serializes");
    let mut out = Vec::with_capacity(20 + json.len() + 8 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.parameters() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &UNet, epoch: usize) -> Result<()> {
    write_file(path, encode(model, epoch))
}

/// Reads a checkpoint. With `expected`, the embedded configuration must match
/// it before any weight is restored.
pub fn load_checkpoint(path: &Path, expected: Option<&UNetConfig>) -> Result<(UNet, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(&bytes, expected).map_err(|message| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    })
}

pub fn decode(bytes: &[u8], expected: Option<&UNetConfig>) -> Result<(UNet, CheckpointHeader), String> {
    let rest = bytes.strip_prefix(MAGIC).ok_or("not a checkpoint (bad magic)")?;
    let (version, rest) = rest.split_at_checked(4).ok_or("truncated header")?;
    let version = u32::from_le_bytes(version.try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let (len, rest) = rest.split_at_checked(8).ok_or("truncated header")?;
    let len = usize::try_from(u64::from_le_bytes(len.try_into().unwrap())).map_err(|e| e.to_string())?;
    let (json, body) = rest.split_at_checked(len).ok_or("truncated header")?;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| format!("bad header: {e}"))?;
    if let Some(cfg) = expected {
        if *cfg != header.unet {
            return Err(format!(
                "architecture mismatch: checkpoint has {:?}, expected {:?}",
                header.unet, cfg
            ));
        }
    }
    if body.len() != 8 * header.param_count {
        return Err(format!(
            "expected {} parameters, found {} bytes",
            header.param_count,
            body.len()
        ));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let model = UNet::from_parameters(&header.unet, params).map_err(|e| e.to_string())?;
    Ok((model, header))
}
