//! `SNEC1` checkpoint container.
//!
//! ```text
//! "SNEC1"                 5 bytes
//! version                 u32 LE (currently 1)
//! header length           u32 LE, then that many bytes of key = value text
//!                         describing the model configuration
//! tensor count            u32 LE
//! per tensor, in name order:
//!   name length           u16 LE, then UTF-8 name
//!   flags                 u8, bit 0 set for optional (co-estimator side) tensors
//!   rows, cols            u32 LE each
//!   data                  rows·cols f64 LE, row-major
//! ```

use std::collections::BTreeMap;

use crate::codec::ByteReader;
use crate::error::{Result, SneError};
use crate::estimator::params::{is_co_estimator_tensor, ModelConfig, SneParams};
use crate::kv::KeyValues;
use crate::numerics::Tensor2;
use crate::patching::ContextSpec;

pub const SNEC_MAGIC: &[u8; 5] = b"SNEC1";
pub const SNEC_VERSION: u32 = 1;
const FLAG_OPTIONAL: u8 = 1;

pub fn config_to_kv(cfg: &ModelConfig) -> KeyValues {
    let mut kv = KeyValues::default();
    kv.set("state_dim", cfg.state_dim);
    kv.set("patch_edge", cfg.patch_edge);
    kv.set("tied", cfg.tied);
    kv.set("cell", cfg.cell);
    kv.set("skip", cfg.skip);
    kv.set("anchor", cfg.anchor);
    kv.set("source_offsets", ContextSpec::format_offsets(&cfg.context.source_offsets));
    kv.set("co_offsets", ContextSpec::format_offsets(&cfg.context.co_offsets));
    kv
}

/// Reads the model keys of `kv`, keeping defaults for absent ones.
pub fn config_from_kv(kv: &KeyValues) -> Result<ModelConfig> {
    let d = ModelConfig::default();
    let source_offsets = match kv.get_str("source_offsets") {
        Some(s) => ContextSpec::parse_offsets(s)?,
        None => d.context.source_offsets.clone(),
    };
    let co_offsets = match kv.get_str("co_offsets") {
        Some(s) => ContextSpec::parse_offsets(s)?,
        None => d.context.co_offsets.clone(),
    };
    let cfg = ModelConfig {
        state_dim: kv.get_or("state_dim", d.state_dim)?,
        patch_edge: kv.get_or("patch_edge", d.patch_edge)?,
        context: ContextSpec::new(source_offsets, co_offsets)?,
        tied: kv.get_or("tied", d.tied)?,
        cell: kv.get_or("cell", d.cell)?,
        skip: kv.get_or("skip", d.skip)?,
        anchor: kv.get_or("anchor", d.anchor)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub const MODEL_KEYS: [&str; 8] =
    ["state_dim", "patch_edge", "tied", "cell", "skip", "anchor", "source_offsets", "co_offsets"];

pub fn save_checkpoint(params: &SneParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SNEC_MAGIC);
    out.extend_from_slice(&SNEC_VERSION.to_le_bytes());
    let header = config_to_kv(&params.config).render();
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(params.tensors().len() as u32).to_le_bytes());
    for (name, t) in params.tensors() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(if is_co_estimator_tensor(name) { FLAG_OPTIONAL } else { 0 });
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn ckpt_err(e: SneError) -> SneError {
    match e {
        SneError::Format(m) => SneError::Checkpoint(m),
        other => other,
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<SneParams> {
    let mut rd = ByteReader { bytes, pos: 0 };
    let mut inner = || -> Result<SneParams> {
        if rd.take(5)? != SNEC_MAGIC {
            return Err(SneError::Checkpoint("missing SNEC1 magic".into()));
        }
        let version = rd.u32()?;
        if version != SNEC_VERSION {
            return Err(SneError::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let header_len = rd.u32()? as usize;
        let header = std::str::from_utf8(rd.take(header_len)?)
            .map_err(|_| SneError::Checkpoint("header is not UTF-8".into()))?;
        let config = config_from_kv(&KeyValues::parse(header)?)?;
        let count = rd.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = rd.u16()? as usize;
            let name = std::str::from_utf8(rd.take(name_len)?)
                .map_err(|_| SneError::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let _flags = rd.take(1)?[0];
            let rows = rd.u32()? as usize;
            let cols = rd.u32()? as usize;
            let raw = rd.take(
                rows.checked_mul(cols)
                    .and_then(|n| n.checked_mul(8))
                    .ok_or_else(|| SneError::Checkpoint(format!("tensor '{name}' is too large")))?,
            )?;
            let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
            if tensors.insert(name.clone(), Tensor2::from_vec(rows, cols, data)?).is_some() {
                return Err(SneError::Checkpoint(format!("duplicate tensor '{name}'")));
            }
        }
        if rd.pos != bytes.len() {
            return Err(SneError::Checkpoint("trailing bytes after tensors".into()));
        }
        SneParams::from_tensors(config, tensors)
    };
    inner().map_err(ckpt_err)
}
