//! Weight container.
//!
//! ```text
//! "PRSK" | u16 version | u32 header length | JSON header | f32 tensors
//! ```
//!
//! All integers and floats are little-endian. The header carries the model
//! and schedule configuration, the registry fingerprint, conformal
//! calibration, the tensor list and a SHA-256 of the tensor bytes. Tensors
//! follow in header order, row-major.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Calibration, ModelConfig, ModelError, ModelWeights, Params};
use crate::sequence::ScheduleConfig;

pub const MAGIC: &[u8; 4] = b"PRSK";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    schedule: ScheduleConfig,
    registry_fingerprint: String,
    calibration: Option<Calibration>,
    tensors: Vec<TensorEntry>,
    data_sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

pub fn to_bytes(weights: &ModelWeights) -> Vec<u8> {
    let named = weights.params.named();
    let mut data = Vec::with_capacity(weights.params.len() * 4);
    for (_, t) in &named {
        for x in &t.data {
            data.extend_from_slice(&x.to_le_bytes());
        }
    }
    let header = Header {
        config: weights.config.clone(),
        schedule: weights.schedule.clone(),
        registry_fingerprint: weights.registry_fingerprint.clone(),
        calibration: weights.calibration.clone(),
        tensors: named
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape(),
            })
            .collect(),
        data_sha256: hex::encode(Sha256::digest(&data)),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(10 + header.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    out
}

/// Decode a container. With `expected_fingerprint`, the registry the weights
/// were trained against must match.
pub fn from_bytes(bytes: &[u8], expected_fingerprint: Option<&str>) -> Result<ModelWeights, ModelError> {
    let corrupt = |m: &str| ModelError::Corrupt(m.to_string());
    if bytes.len() < 10 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing PRSK magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let header_end = 10usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&bytes[10..header_end]).map_err(|e| corrupt(&format!("bad header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| corrupt(&format!("invalid config: {e}")))?;
    crate::sequence::make_schedule(&header.schedule).map_err(|e| corrupt(&e.to_string()))?;

    let data = &bytes[header_end..];
    if hex::encode(Sha256::digest(data)) != header.data_sha256 {
        return Err(corrupt("tensor data checksum mismatch (truncated or altered)"));
    }
    let mut params: Params<f32> = Params::zeros(&header.config);
    let named: Vec<(String, [usize; 2])> = params.named().into_iter().map(|(n, t)| (n, t.shape())).collect();
    if named.len() != header.tensors.len()
        || named
            .iter()
            .zip(&header.tensors)
            .any(|((n, s), e)| *n != e.name || *s != e.shape)
    {
        return Err(corrupt("tensor list does not match the configuration"));
    }
    if data.len() != params.len() * 4 {
        return Err(corrupt("tensor data has the wrong length"));
    }
    let mut chunks = data.chunks_exact(4);
    for t in params.tensors_mut() {
        for x in &mut t.data {
            *x = f32::from_le_bytes(chunks.next().expect("length checked").try_into().expect("4 bytes"));
        }
    }
    if !params.all_finite() {
        return Err(corrupt("non-finite weights"));
    }
    if let Some(expected) = expected_fingerprint {
        if expected != header.registry_fingerprint {
            return Err(ModelError::FingerprintMismatch {
                expected: expected.to_string(),
                found: header.registry_fingerprint,
            });
        }
    }
    Ok(ModelWeights {
        config: header.config,
        schedule: header.schedule,
        registry_fingerprint: header.registry_fingerprint,
        calibration: header.calibration,
        params,
    })
}

/// Short content hash of the serialized container, used as the model version.
pub fn model_version(weights: &ModelWeights) -> String {
    let digest = Sha256::digest(to_bytes(weights));
    format!("m-{}", &hex::encode(digest)[..12])
}

pub fn save(weights: &ModelWeights, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, to_bytes(weights)).map_err(|e| ModelError::Io(e.to_string()))
}

pub fn load(path: impl AsRef<Path>, expected_fingerprint: Option<&str>) -> Result<ModelWeights, ModelError> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Io(e.to_string()))?;
    from_bytes(&bytes, expected_fingerprint)
}
