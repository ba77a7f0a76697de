//! Checkpoint serialization: a magic tag, an 8-byte config hash, the
//! config blob itself, then flat named tensor records. Everything is
//! little-endian and byte-stable so the file digest can double as a model
//! identity.

use std::io::{Read, Write};

use crate::{Init, ParamSet, Precision, Result, Scalar, Tensor, TensorError};

pub const CKPT_MAGIC: &[u8; 8] = b"RASCKPT1";

#[derive(Debug, Clone)]
pub struct CheckpointRecord {
    pub name: String,
    pub precision: Precision,
    pub dims: Vec<usize>,
    /// Raw little-endian element bytes.
    pub raw: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config_hash: [u8; 8],
    pub config_json: String,
    pub records: Vec<CheckpointRecord>,
}

impl Checkpoint {
    pub fn from_params<T: Scalar>(config_hash: [u8; 8], config_json: &str, params: &ParamSet<T>) -> Self {
        let records = params
            .iter()
            .map(|(name, p)| {
                let mut raw = Vec::with_capacity(p.value.numel() * T::precision().bytes());
                for &v in p.value.data() {
                    match T::precision() {
                        Precision::F32 => raw.extend_from_slice(&(v.to_f64() as f32).to_le_bytes()),
                        Precision::F64 => raw.extend_from_slice(&v.to_f64().to_le_bytes()),
                    }
                }
                CheckpointRecord {
                    name: name.clone(),
                    precision: T::precision(),
                    dims: p.value.dims().to_vec(),
                    raw,
                }
            })
            .collect();
        Checkpoint { config_hash, config_json: config_json.to_string(), records }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&self.config_hash);
        let cfg = self.config_json.as_bytes();
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            let name = r.name.as_bytes();
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name);
            out.push(r.precision.tag());
            out.push(r.dims.len() as u8);
            for &d in &r.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(r.raw.len() as u64).to_le_bytes());
            out.extend_from_slice(&r.raw);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        let magic = cur.take(8)?;
        if magic != CKPT_MAGIC {
            return Err(TensorError::Checkpoint(format!("bad magic {magic:02x?}")));
        }
        let mut config_hash = [0u8; 8];
        config_hash.copy_from_slice(cur.take(8)?);
        let cfg_len = cur.u32()? as usize;
        let config_json = String::from_utf8(cur.take(cfg_len)?.to_vec())
            .map_err(|e| TensorError::Checkpoint(format!("config not utf-8: {e}")))?;
        let n_records = cur.u32()? as usize;
        let mut records = Vec::with_capacity(n_records);
        for _ in 0..n_records {
            let name_len = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|e| TensorError::Checkpoint(format!("name not utf-8: {e}")))?;
            let prec_tag = cur.u8()?;
            let precision = Precision::from_tag(prec_tag)
                .ok_or_else(|| TensorError::Checkpoint(format!("unknown precision tag {prec_tag}")))?;
            let rank = cur.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.u64()? as usize);
            }
            let raw_len = cur.u64()? as usize;
            let numel: usize = dims.iter().product();
            if raw_len != numel * precision.bytes() {
                return Err(TensorError::Checkpoint(format!(
                    "record {name}: {raw_len} bytes for {numel} elements"
                )));
            }
            let raw = cur.take(raw_len)?.to_vec();
            records.push(CheckpointRecord { name, precision, dims, raw });
        }
        if cur.pos != bytes.len() {
            return Err(TensorError::Checkpoint(format!(
                "{} trailing bytes after records",
                bytes.len() - cur.pos
            )));
        }
        Ok(Checkpoint { config_hash, config_json, records })
    }

    /// Rebuilds a parameter set; rejects precision or shape departures from
    /// `expect` when given.
    pub fn to_params<T: Scalar>(&self, expect: Option<&ParamSet<T>>) -> Result<ParamSet<T>> {
        let mut params = ParamSet::new();
        for r in &self.records {
            if r.precision != T::precision() {
                return Err(TensorError::Checkpoint(format!(
                    "record {} stored as {:?}, loader wants {:?}",
                    r.name,
                    r.precision,
                    T::precision()
                )));
            }
            let data: Vec<T> = match r.precision {
                Precision::F32 => r
                    .raw
                    .chunks_exact(4)
                    .map(|c| T::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                    .collect(),
                Precision::F64 => r
                    .raw
                    .chunks_exact(8)
                    .map(|c| {
                        T::from_f64(f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                    })
                    .collect(),
            };
            let value = Tensor::from_vec(&r.dims, data)?;
            if let Some(exp) = expect {
                let existing = exp.get(&r.name)?;
                if existing.value.shape() != value.shape() {
                    return Err(TensorError::Checkpoint(format!(
                        "record {}: shape {} does not match model {}",
                        r.name,
                        value.shape(),
                        existing.value.shape()
                    )));
                }
            }
            params.register(&r.name, value.dims(), Init::Zeros, 0)?;
            params.set_value(&r.name, value)?;
        }
        if let Some(exp) = expect {
            for name in exp.names() {
                params.get(name).map_err(|_| {
                    TensorError::Checkpoint(format!("model parameter {name} missing from checkpoint"))
                })?;
            }
        }
        Ok(params)
    }
}

pub fn save_checkpoint(path: &std::path::Path, ckpt: &Checkpoint) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Checkpoint::from_bytes(&buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(TensorError::Checkpoint(format!(
                "truncated: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
    }
}
