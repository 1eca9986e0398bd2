use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{param_count, CnnArch, CnnWeights, EpochStats};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Header line of a checkpoint file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub arch: CnnArch,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    /// Best validation loss; absent for untrained weights.
    pub val_loss: Option<f64>,
    #[serde(default)]
    pub curve: Vec<EpochStats>,
}

impl CheckpointMeta {
    pub fn new(
        arch: CnnArch,
        seed: u64,
        epochs: usize,
        best_epoch: usize,
        val_loss: Option<f64>,
        curve: Vec<EpochStats>,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            arch,
            seed,
            epochs,
            best_epoch,
            val_loss,
            curve,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub weights: CnnWeights,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    /// Wraps untrained weights.
    pub fn from_weights(weights: CnnWeights, seed: u64) -> Self {
        let meta = CheckpointMeta::new(weights.arch.clone(), seed, 0, 0, None, Vec::new());
        Self { weights, meta }
    }
}

/// Writes a JSON header line followed by the raw f32-LE parameters.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = serde_json::to_vec(&ckpt.meta).expect("header serializes");
    bytes.push(b'\n');
    bytes.reserve(ckpt.weights.params.len() * 4);
    for v in &ckpt.weights.params {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let corrupt = |m: &str| Error::CorruptBlob(m.to_string());
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing header line"))?;
    let header: serde_json::Value =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| corrupt(&format!("header: {e}")))?;
    let version = header
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt("header has no version"))?;
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::VersionMismatch(
            u32::try_from(version).unwrap_or(u32::MAX),
        ));
    }
    let meta: CheckpointMeta =
        serde_json::from_value(header).map_err(|e| corrupt(&format!("header: {e}")))?;
    meta.arch
        .validate()
        .map_err(|e| corrupt(&format!("architecture: {e}")))?;
    let blob = &bytes[nl + 1..];
    let n = param_count(&meta.arch);
    if blob.len() != n * 4 {
        return Err(corrupt(&format!(
            "expected {} parameter bytes, found {}",
            n * 4,
            blob.len()
        )));
    }
    let params = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let weights = CnnWeights::from_params(meta.arch.clone(), params)?;
    if !weights.is_finite() {
        return Err(corrupt("non-finite parameter"));
    }
    Ok(Checkpoint { weights, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let w = CnnWeights::init(CnnArch::default(), 4).unwrap();
        Checkpoint::from_weights(w, 4)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample();
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        let bits = |c: &Checkpoint| {
            c.weights
                .params
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&back), bits(&ckpt));
        assert_eq!(back.meta.arch, ckpt.meta.arch);
        let size = fs::metadata(&path).unwrap().len() as usize;
        let header = fs::read(&path)
            .unwrap()
            .iter()
            .position(|&b| b == b'\n')
            .unwrap();
        assert_eq!(size - header - 1, 171_474 * 4);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::CorruptBlob(_))));
        assert!(matches!(
            parse_checkpoint(b"{\"version\":1"),
            Err(Error::CorruptBlob(_))
        ));
        assert!(matches!(
            parse_checkpoint(b"not json\n"),
            Err(Error::CorruptBlob(_))
        ));
    }

    #[test]
    fn unknown_version() {
        let mut bytes = br#"{"version":7,"anything":true}"#.to_vec();
        bytes.push(b'\n');
        assert!(matches!(
            parse_checkpoint(&bytes),
            Err(Error::VersionMismatch(7))
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_checkpoint("/nonexistent/model.ckpt"),
            Err(Error::MissingFile(_))
        ));
    }
}
