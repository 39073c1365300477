//! Self-describing binary checkpoint container.
//!
//! Layout: an 8-byte magic, a u32 format version, a u32 header length, a JSON
//! header (fingerprint, step, dev perplexity, storage dtype, tensor table),
//! then the tensor payloads as little-endian floats in table order. The same
//! container stores translation models and the domain classifier; they differ
//! only in fingerprint and tensor names.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::forward::Model;
use super::params::Parameters;
use crate::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CTXMTCKP";
const FORMAT_VERSION: u32 = 1;

/// Storage precision for tensor payloads. Checkpoints always load back into
/// f64; f32 trades exact round-trips for half the file size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    fingerprint: String,
    step: u64,
    dev_ppl: Option<f64>,
    dtype: Dtype,
    tensors: Vec<TensorEntry>,
}

/// A parameter snapshot with its provenance.
#[derive(Clone)]
pub struct Checkpoint {
    /// Architecture fingerprint of the producing configuration.
    pub fingerprint: String,
    /// Optimizer step at which the snapshot was taken.
    pub step: u64,
    /// Dev-set perplexity measured at `step`, when known.
    pub dev_ppl: Option<f64>,
    pub params: Parameters,
}

impl Checkpoint {
    /// Snapshot of a model's current parameters.
    pub fn of_model(model: &Model, step: u64, dev_ppl: Option<f64>) -> Checkpoint {
        Checkpoint {
            fingerprint: model.cfg.fingerprint(),
            step,
            dev_ppl,
            params: model.params.clone(),
        }
    }

    pub fn save(&self, path: &Path, dtype: Dtype) -> Result<()> {
        let header = Header {
            fingerprint: self.fingerprint.clone(),
            step: self.step,
            dev_ppl: self.dev_ppl,
            dtype,
            tensors: self
                .params
                .iter()
                .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape().to_vec() })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| Error::Checkpoint(format!("header serialization failed: {}", e)))?;
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(|e| io(e))?);
        w.write_all(MAGIC).map_err(|e| io(e))?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(|e| io(e))?;
        w.write_all(&(header_bytes.len() as u32).to_le_bytes()).map_err(|e| io(e))?;
        w.write_all(&header_bytes).map_err(|e| io(e))?;
        for t in self.params.values() {
            match dtype {
                Dtype::F64 => {
                    for &v in t.data() {
                        w.write_all(&v.to_le_bytes()).map_err(|e| io(e))?;
                    }
                }
                Dtype::F32 => {
                    for &v in t.data() {
                        w.write_all(&(v as f32).to_le_bytes()).map_err(|e| io(e))?;
                    }
                }
            }
        }
        w.flush().map_err(|e| io(e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let io = |e| Error::io(path, e);
        let bad = |msg: String| Error::Checkpoint(format!("{}: {}", path.display(), msg));
        let mut r = BufReader::new(File::open(path).map_err(|e| io(e))?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| io(e))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf).map_err(|e| io(e))?;
        let version = u32::from_le_bytes(u32buf);
        if version != FORMAT_VERSION {
            return Err(bad(format!(
                "format version {} unsupported (expected {})",
                version, FORMAT_VERSION
            )));
        }
        r.read_exact(&mut u32buf).map_err(|e| io(e))?;
        let header_len = u32::from_le_bytes(u32buf) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes).map_err(|e| io(e))?;
        let header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| bad(format!("corrupt header: {}", e)))?;

        let mut params = Parameters::new();
        for entry in &header.tensors {
            let numel: usize = entry.shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            match header.dtype {
                Dtype::F64 => {
                    let mut buf = [0u8; 8];
                    for _ in 0..numel {
                        r.read_exact(&mut buf).map_err(|e| {
                            bad(format!("truncated payload in {:?}: {}", entry.name, e))
                        })?;
                        data.push(f64::from_le_bytes(buf));
                    }
                }
                Dtype::F32 => {
                    let mut buf = [0u8; 4];
                    for _ in 0..numel {
                        r.read_exact(&mut buf).map_err(|e| {
                            bad(format!("truncated payload in {:?}: {}", entry.name, e))
                        })?;
                        data.push(f32::from_le_bytes(buf) as f64);
                    }
                }
            }
            if params
                .insert(entry.name.clone(), Arc::new(Tensor::new(&entry.shape, data)))
                .is_some()
            {
                return Err(bad(format!("duplicate tensor name {:?}", entry.name)));
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| io(e))? != 0 {
            return Err(bad("trailing bytes after the last tensor".into()));
        }
        Ok(Checkpoint {
            fingerprint: header.fingerprint,
            step: header.step,
            dev_ppl: header.dev_ppl,
            params,
        })
    }

    /// Instantiates the checkpointed model, refusing architecture mismatches:
    /// the fingerprint must match `cfg` and every tensor must have the
    /// expected shape.
    pub fn into_model(self, cfg: ModelConfig) -> Result<Model> {
        if self.fingerprint != cfg.fingerprint() {
            return Err(Error::Checkpoint(format!(
                "checkpoint was produced by a different architecture \
                 (fingerprint {} vs configured {})",
                self.fingerprint,
                cfg.fingerprint()
            )));
        }
        Model::from_parts(cfg, self.params)
    }
}

/// Element-wise arithmetic mean of several parameter snapshots; they must
/// agree on names and shapes. Used for checkpoint averaging. Computed as
/// first + mean(deltas) so that averaging identical snapshots returns them
/// bit-exactly.
pub fn average_parameters(snapshots: &[Parameters]) -> Result<Parameters> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::Invalid("averaging zero checkpoints".into()))?;
    let inv = 1.0 / snapshots.len() as f64;
    let mut out = Parameters::new();
    for (name, t0) in first {
        let mut acc = vec![0.0; t0.numel()];
        for snap in &snapshots[1..] {
            let t = snap.get(name).ok_or_else(|| {
                Error::Checkpoint(format!("snapshot missing parameter {:?} while averaging", name))
            })?;
            if t.shape() != t0.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {:?} has shape {:?} in one snapshot but {:?} in another",
                    name,
                    t.shape(),
                    t0.shape()
                )));
            }
            for ((a, &v), &anchor) in acc.iter_mut().zip(t.data()).zip(t0.data()) {
                *a += v - anchor;
            }
        }
        let mean: Vec<f64> = t0
            .data()
            .iter()
            .zip(&acc)
            .map(|(&anchor, &delta)| if delta == 0.0 { anchor } else { anchor + delta * inv })
            .collect();
        out.insert(name.clone(), Arc::new(Tensor::new(t0.shape(), mean)));
    }
    for snap in snapshots {
        if snap.len() != first.len() {
            return Err(Error::Checkpoint(
                "snapshots disagree on parameter count while averaging".into(),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelKind};
    use tempfile::tempdir;

    fn model() -> Model {
        let mut cfg = ModelConfig::desk(ModelKind::CtxpoolAvg, 16);
        cfg.num_layers = 1;
        cfg.num_heads = 2;
        cfg.d_model = 8;
        cfg.d_ff = 12;
        Model::new(cfg, 3)
    }

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        Checkpoint::of_model(&m, 120, Some(9.25)).save(&path, Dtype::F64).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.step, 120);
        assert_eq!(loaded.dev_ppl, Some(9.25));
        assert_eq!(loaded.fingerprint, m.cfg.fingerprint());
        assert_eq!(loaded.params.len(), m.params.len());
        for (name, t) in &m.params {
            assert_eq!(loaded.params[name].as_ref(), t.as_ref(), "{} changed in transit", name);
        }
    }

    #[test]
    fn f32_round_trip_stays_within_single_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m32.ckpt");
        let m = model();
        Checkpoint::of_model(&m, 1, None).save(&path, Dtype::F32).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        for (name, t) in &m.params {
            let max = loaded.params[name].max_abs_diff(t);
            assert!(max < 1e-6, "{} drifted {} beyond f32 precision", name, max);
        }
    }

    #[test]
    fn loading_into_a_different_architecture_fails_loudly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        let other_cfg = ModelConfig { num_heads: 1, ..m.cfg.clone() };
        Checkpoint::of_model(&m, 0, None).save(&path, Dtype::F64).unwrap();
        let err = Checkpoint::load(&path).unwrap().into_model(other_cfg);
        assert!(matches!(err, Err(Error::Checkpoint(_))), "fingerprint mismatch must refuse");
        let ok = Checkpoint::load(&path).unwrap().into_model(m.cfg.clone());
        assert!(ok.is_ok());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        Checkpoint::of_model(&m, 0, None).save(&path, Dtype::F64).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let truncated = dir.path().join("trunc.ckpt");
        std::fs::write(&truncated, &bytes[..bytes.len() - 9]).unwrap();
        assert!(Checkpoint::load(&truncated).is_err());

        let wrong_magic = dir.path().join("magic.ckpt");
        let mut b = bytes.clone();
        b[0] ^= 0xFF;
        std::fs::write(&wrong_magic, &b).unwrap();
        assert!(Checkpoint::load(&wrong_magic).is_err());

        let trailing = dir.path().join("trailing.ckpt");
        let mut b = bytes;
        b.push(0);
        std::fs::write(&trailing, &b).unwrap();
        assert!(Checkpoint::load(&trailing).is_err());
    }

    #[test]
    fn averaging_is_the_elementwise_mean() {
        let m = model();
        let mut shifted = Parameters::new();
        for (name, t) in &m.params {
            let data = t.data().iter().map(|v| v + 2.0).collect();
            shifted.insert(name.clone(), Arc::new(Tensor::new(t.shape(), data)));
        }
        let avg = average_parameters(&[m.params.clone(), shifted]).unwrap();
        for (name, t) in &m.params {
            let expected: Vec<f64> = t.data().iter().map(|v| v + 1.0).collect();
            let got = avg[name].data();
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12, "{} averaged wrong", name);
            }
        }
    }

    #[test]
    fn averaging_rejects_mismatched_snapshots() {
        let m = model();
        let mut missing = m.params.clone();
        missing.shift_remove("embed");
        assert!(average_parameters(&[m.params.clone(), missing]).is_err());
        assert!(average_parameters(&[]).is_err());
    }
}
