//! Binary checkpoints: `TCNN`, a u32 version, the network config, then the
//! parameters as little-endian f32 in declaration order.
//!
//! Layout after the magic (all integers little-endian):
//! `version u32 | input_size u32 | in_channels u32 | n_blocks u32 |
//! channels u32 × n_blocks | frozen u8 | n_params u64 | params f32 × n_params`.

use std::path::Path;

use super::net::{ConvNet, NetConfig};
use super::CnnError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TCNN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &ConvNet<f32>) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::with_capacity(32 + 4 * model.params().len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let mut put = |v: u32| out.extend_from_slice(&v.to_le_bytes());
    put(CHECKPOINT_VERSION);
    put(cfg.input_size as u32);
    put(cfg.in_channels as u32);
    put(cfg.channels.len() as u32);
    for &c in &cfg.channels {
        put(c as u32);
    }
    out.push(u8::from(model.frozen_feature_layers));
    out.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CnnError> {
        if self.bytes.len() < n {
            return Err(CnnError::Checkpoint("truncated".into()));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, CnnError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ConvNet<f32>, CnnError> {
    let mut r = Reader { bytes };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(CnnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CnnError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let input_size = r.u32()? as usize;
    let in_channels = r.u32()? as usize;
    let n_blocks = r.u32()? as usize;
    if n_blocks > 64 {
        return Err(CnnError::Checkpoint(format!(
            "implausible block count {n_blocks}"
        )));
    }
    let channels = (0..n_blocks)
        .map(|_| r.u32().map(|c| c as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let frozen = match r.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(CnnError::Checkpoint(format!("bad frozen flag {b}"))),
    };
    let n = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let raw = r.take(
        n.checked_mul(4)
            .ok_or_else(|| CnnError::Checkpoint("overflow".into()))?,
    )?;
    if !r.bytes.is_empty() {
        return Err(CnnError::Checkpoint("trailing bytes".into()));
    }
    let params = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let config = NetConfig {
        input_size,
        in_channels,
        channels,
    };
    let mut net =
        ConvNet::from_params(config, params).map_err(|e| CnnError::Checkpoint(e.to_string()))?;
    net.frozen_feature_layers = frozen;
    Ok(net)
}

pub fn save_checkpoint(model: &ConvNet<f32>, path: &Path) -> Result<(), CnnError> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|source| CnnError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<ConvNet<f32>, CnnError> {
    let bytes = std::fs::read(path).map_err(|source| CnnError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
