//! Binary weights container.
//!
//! Layout: `ISTW` magic, `u32` format version, `u64` header length, a JSON
//! header, then every tensor as little-endian `f64` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::StylekitError;
use crate::layers::Param;
use crate::train::{TransNet, TransNetConfig};

const MAGIC: &[u8; 4] = b"ISTW";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsHeader {
    pub class_name: String,
    pub config_hash: String,
    pub step: u64,
    pub config: TransNetConfig,
    pub tensors: Vec<TensorEntry>,
}

fn named<'a>(prefix: &str, params: Vec<&'a Param>) -> Vec<(String, &'a Param)> {
    params
        .into_iter()
        .enumerate()
        .map(|(i, p)| (format!("{prefix}.{}.{}", i / 2, if i % 2 == 0 { "weight" } else { "bias" }), p))
        .collect()
}

fn all_params(net: &TransNet) -> Vec<(String, &Param)> {
    let mut out = named("G", net.gen.params());
    out.extend(named("D", net.disc.params()));
    out.extend(named("H", net.head.params()));
    out
}

pub fn encode_weights(net: &TransNet) -> Result<Vec<u8>, StylekitError> {
    let params = all_params(net);
    let header = WeightsHeader {
        class_name: net.class_name.clone(),
        config_hash: net.config.hash(),
        step: net.step,
        config: net.config.clone(),
        tensors: params
            .iter()
            .map(|(name, p)| TensorEntry {
                name: name.clone(),
                len: p.value.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(16 + json.len() + params.iter().map(|(_, p)| 8 * p.value.len()).sum::<usize>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for (name, p) in &params {
        if p.value.iter().any(|v| !v.is_finite()) {
            return Err(StylekitError::InvalidConfig(format!("tensor {name} has non-finite values")));
        }
        for v in &p.value {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

pub fn decode_weights(bytes: &[u8], origin: &Path) -> Result<TransNet, StylekitError> {
    let err = |reason: String| StylekitError::Weights {
        path: origin.to_path_buf(),
        reason,
    };
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(err("not a weights file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body_start = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| err("truncated header".into()))?;
    let header: WeightsHeader =
        serde_json::from_slice(&bytes[16..body_start]).map_err(|e| err(format!("bad header: {e}")))?;
    if header.config.hash() != header.config_hash {
        return Err(err("config hash does not match the stored config".into()));
    }
    header.config.validate()?;
    let mut net = TransNet::new(&header.class_name, header.config.clone())?;
    net.step = header.step;
    let expected: Vec<(String, usize)> = all_params(&net).into_iter().map(|(n, p)| (n, p.value.len())).collect();
    let stored: Vec<(String, usize)> = header.tensors.iter().map(|t| (t.name.clone(), t.len)).collect();
    if expected != stored {
        return Err(err("tensor table does not match the configured architecture".into()));
    }
    let total: usize = stored.iter().map(|(_, l)| l).sum();
    if bytes.len() != body_start + 8 * total {
        return Err(err(format!("expected {} data bytes, found {}", 8 * total, bytes.len() - body_start)));
    }
    let mut values = bytes[body_start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let TransNet { gen, disc, head, .. } = &mut net;
    let params = gen
        .params_mut()
        .into_iter()
        .chain(disc.params_mut())
        .chain(head.params_mut());
    for p in params {
        for v in p.value.iter_mut() {
            *v = values.next().expect("length checked");
            if !v.is_finite() {
                return Err(err("non-finite parameter".into()));
            }
        }
    }
    Ok(net)
}

pub fn save_weights(net: &TransNet, path: &Path) -> Result<(), StylekitError> {
    let bytes = encode_weights(net)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| StylekitError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| StylekitError::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<TransNet, StylekitError> {
    let bytes = std::fs::read(path).map_err(|e| StylekitError::io(path, e))?;
    decode_weights(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut cfg = TransNetConfig::toy();
        cfg.seed = 3;
        let net = TransNet::new("puck", cfg).unwrap();
        let bytes = encode_weights(&net).unwrap();
        let back = decode_weights(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.gen, net.gen);
        assert_eq!(back.disc, net.disc);
        assert_eq!(back.head, net.head);
        assert_eq!(encode_weights(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = TransNet::new("puck", TransNetConfig::toy()).unwrap();
        let bytes = encode_weights(&net).unwrap();
        assert!(decode_weights(&bytes[..bytes.len() - 8], Path::new("x")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_weights(&bad, Path::new("x")).is_err());
    }
}
