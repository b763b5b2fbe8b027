//! Versioned binary checkpoints.
//!
//! All integers little-endian:
//!
//! ```text
//! magic      8 bytes  "MSPRLCKP"
//! version    u32      1
//! config     u32 length + UTF-8 `key = value` model configuration
//! iteration  u64      completed optimizer steps
//! seed       u64      sampler seed
//! next_batch u64      index of the next batch to draw
//! adam_step  u64
//! records    u32 count, then per tensor:
//!              u32 name length, name, u8 dtype tag (0 = f32, 1 = f64),
//!              u32 rank, rank × u64 extents, payload
//! crc        u32      CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Records hold the parameters in registry order, then `adam.m/<name>` and
//! `adam.v/<name>` for each parameter.

use std::path::Path;

use msprl_tensor::{DType, Element, Tensor};
use thiserror::Error;

use super::optim::OptimizerState;
use crate::error::{Error, Result};
use crate::image::write_atomic;
use crate::net::{ModelConfig, MsprlModel, ParamStore};

pub const MAGIC: &[u8; 8] = b"MSPRLCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("tensor `{name}` has dtype {found:?}, expected {expected:?}")]
    DType { name: String, expected: DType, found: DType },
    #[error("tensor `{name}` has shape {found:?}, model expects {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("record {index} is `{found}`, model expects `{expected}`")]
    Name { index: usize, expected: String, found: String },
    #[error("checkpoint holds {found} records, model expects {expected}")]
    RecordCount { expected: usize, found: usize },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Everything needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<E: Element = f32> {
    pub model: MsprlModel<E>,
    pub optimizer: OptimizerState<E>,
    pub iteration: u64,
    pub seed: u64,
    pub next_batch: u64,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> std::result::Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Malformed("non-UTF-8 text".into()))
    }
}

struct Record<'a> {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    payload: &'a [u8],
}

fn write_record<E: Element>(out: &mut Vec<u8>, name: &str, t: &Tensor<E>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(E::DTYPE.tag());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
}

fn read_record<'a>(r: &mut Reader<'a>) -> std::result::Result<Record<'a>, CheckpointError> {
    let name = r.string()?;
    let tag = r.u8()?;
    let dtype = DType::from_tag(tag).ok_or_else(|| CheckpointError::Malformed(format!("dtype tag {tag}")))?;
    let rank = r.u32()? as usize;
    if rank > 8 {
        return Err(CheckpointError::Malformed(format!("rank {rank} for `{name}`")));
    }
    let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
    let len = shape
        .iter()
        .try_fold(dtype.size_of(), |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| CheckpointError::Malformed(format!("extents of `{name}` overflow")))?;
    let payload = r.take(len)?;
    Ok(Record {
        name,
        dtype,
        shape,
        payload,
    })
}

fn decode_tensor<E: Element>(rec: &Record<'_>, expected: &[usize]) -> std::result::Result<Tensor<E>, CheckpointError> {
    if rec.dtype != E::DTYPE {
        return Err(CheckpointError::DType {
            name: rec.name.clone(),
            expected: E::DTYPE,
            found: rec.dtype,
        });
    }
    if rec.shape != expected {
        return Err(CheckpointError::Shape {
            name: rec.name.clone(),
            expected: expected.to_vec(),
            found: rec.shape.clone(),
        });
    }
    let data = rec.payload.chunks_exact(E::DTYPE.size_of()).map(E::read_le).collect();
    Tensor::from_vec(rec.shape.clone(), data).map_err(|e| CheckpointError::Malformed(e.to_string()))
}

fn record_names(params: &ParamStore<impl Element>) -> Vec<String> {
    let names: Vec<&str> = params.iter().map(|p| p.name.as_str()).collect();
    names
        .iter()
        .map(|n| n.to_string())
        .chain(names.iter().map(|n| format!("adam.m/{n}")))
        .chain(names.iter().map(|n| format!("adam.v/{n}")))
        .collect()
}

impl<E: Element> Checkpoint<E> {
    /// Fresh state for `model` before any step.
    pub fn initial(model: MsprlModel<E>, seed: u64) -> Self {
        let optimizer = OptimizerState::new(model.params());
        Self {
            model,
            optimizer,
            iteration: 0,
            seed,
            next_batch: 0,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let cfg = self.model.config().to_text();
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        for v in [self.iteration, self.seed, self.next_batch, self.optimizer.step] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let params = self.model.params();
        out.extend_from_slice(&((params.len() * 3) as u32).to_le_bytes());
        for p in params.iter() {
            write_record(&mut out, &p.name, &p.tensor);
        }
        for (prefix, moments) in [("adam.m", &self.optimizer.m), ("adam.v", &self.optimizer.v)] {
            for (p, t) in params.iter().zip(moments) {
                write_record(&mut out, &format!("{prefix}/{}", p.name), t);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Decodes a checkpoint, rebuilding the model from its stored
    /// configuration.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = parse_header(bytes)?;
        let config = ModelConfig::from_text(&header.config)?;
        Self::decode(bytes, header, MsprlModel::new(config)?)
    }

    /// Decodes a checkpoint into a model built from `config`, failing on the
    /// first record whose name or shape differs from that model's registry.
    pub fn from_bytes_for(bytes: &[u8], config: &ModelConfig) -> Result<Self> {
        let header = parse_header(bytes)?;
        Self::decode(bytes, header, MsprlModel::new(config.clone())?)
    }

    fn decode(bytes: &[u8], header: Header, mut model: MsprlModel<E>) -> Result<Self> {
        let mut r = Reader {
            bytes: &bytes[..bytes.len() - 4],
            pos: header.records_at,
        };
        let expected_names = record_names(model.params());
        let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.tensor.shape().to_vec()).collect();
        let n = model.params().len();
        let mut tensors = Vec::with_capacity(expected_names.len());
        for (i, expected) in expected_names.iter().enumerate() {
            if i >= header.count {
                return Err(CheckpointError::RecordCount {
                    expected: expected_names.len(),
                    found: header.count,
                }
                .into());
            }
            let rec = read_record(&mut r)?;
            if &rec.name != expected {
                return Err(CheckpointError::Name {
                    index: i,
                    expected: expected.clone(),
                    found: rec.name,
                }
                .into());
            }
            tensors.push(decode_tensor::<E>(&rec, &shapes[i % n])?);
        }
        if header.count != expected_names.len() {
            return Err(CheckpointError::RecordCount {
                expected: expected_names.len(),
                found: header.count,
            }
            .into());
        }
        if r.pos != r.bytes.len() {
            return Err(CheckpointError::Malformed("trailing bytes after the last record".into()).into());
        }
        let v = tensors.split_off(2 * n);
        let m = tensors.split_off(n);
        for (p, t) in model.params_mut().iter_mut().zip(tensors) {
            p.tensor = t;
        }
        Ok(Self {
            model,
            optimizer: OptimizerState {
                step: header.adam_step,
                m,
                v,
            },
            iteration: header.iteration,
            seed: header.seed,
            next_batch: header.next_batch,
        })
    }

    /// Atomic write: temporary file, then rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Header {
    config: String,
    iteration: u64,
    seed: u64,
    next_batch: u64,
    adam_step: u64,
    count: usize,
    records_at: usize,
}

/// Validates magic, version and checksum, then reads the fixed fields.
fn parse_header(bytes: &[u8]) -> std::result::Result<Header, CheckpointError> {
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) {
            CheckpointError::Truncated
        } else {
            CheckpointError::BadMagic
        });
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    if bytes.len() < r.pos + 4 {
        return Err(CheckpointError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    let mut r = Reader { bytes: body, pos: r.pos };
    let config = r.string()?;
    let iteration = r.u64()?;
    let seed = r.u64()?;
    let next_batch = r.u64()?;
    let adam_step = r.u64()?;
    let count = r.u32()? as usize;
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    Ok(Header {
        config,
        iteration,
        seed,
        next_batch,
        adam_step,
        count,
        records_at: r.pos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Checkpoint<f32> {
        Checkpoint::initial(MsprlModel::new(ModelConfig::tiny(2, 1)).unwrap(), 3)
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let bytes = tiny().to_bytes();
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, tiny());
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn header_errors() {
        let bytes = tiny().to_bytes();
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(b"PNG").unwrap_err(),
            Error::Checkpoint(CheckpointError::BadMagic)
        ));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&v2).unwrap_err(),
            Error::Checkpoint(CheckpointError::Version(2))
        ));
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 10]).unwrap_err(),
            Error::Checkpoint(CheckpointError::Checksum { .. } | CheckpointError::Truncated)
        ));
        assert!(matches!(
            Checkpoint::<f64>::from_bytes(&bytes).unwrap_err(),
            Error::Checkpoint(CheckpointError::DType { .. })
        ));
    }
}
