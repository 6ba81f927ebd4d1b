//! Binary record container:
//!
//! ```text
//! "P2SQ" | version u32 | record count u32 | records... | sha256 of all preceding bytes
//! record: name len u32 | name | rank u32 | dims u64 x rank | dtype u8 | payload len u64 | payload
//! ```
//!
//! All integers and floats are little-endian. Text records hold `dims[0]`
//! strings, each a u32 length followed by UTF-8 bytes.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::Tensor;

pub const MAGIC: &[u8; 4] = b"P2SQ";
pub const FORMAT_VERSION: u32 = 1;

const DTYPE_F64: u8 = 0;
const DTYPE_F32: u8 = 1;
const DTYPE_U64: u8 = 2;
const DTYPE_TEXT: u8 = 3;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint is missing record {0:?}")]
    Missing(String),
    #[error("record {name:?}: {message}")]
    BadRecord { name: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F64(Vec<f64>),
    F32(Vec<f32>),
    U64(Vec<u64>),
    Text(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u64>,
    pub payload: Payload,
}

impl Record {
    pub fn tensor(name: impl Into<String>, t: &Tensor, as_f32: bool) -> Record {
        let payload = if as_f32 {
            Payload::F32(t.data().iter().map(|&v| v as f32).collect())
        } else {
            Payload::F64(t.data().to_vec())
        };
        Record {
            name: name.into(),
            dims: t.shape().iter().map(|&d| d as u64).collect(),
            payload,
        }
    }

    pub fn u64s(name: impl Into<String>, values: Vec<u64>) -> Record {
        Record {
            name: name.into(),
            dims: vec![values.len() as u64],
            payload: Payload::U64(values),
        }
    }

    pub fn scalar_f64(name: impl Into<String>, v: f64) -> Record {
        Record {
            name: name.into(),
            dims: vec![1],
            payload: Payload::F64(vec![v]),
        }
    }

    pub fn text(name: impl Into<String>, items: Vec<String>) -> Record {
        Record {
            name: name.into(),
            dims: vec![items.len() as u64],
            payload: Payload::Text(items),
        }
    }

    fn bad(&self, message: impl Into<String>) -> CheckpointError {
        CheckpointError::BadRecord {
            name: self.name.clone(),
            message: message.into(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor, CheckpointError> {
        let data = match &self.payload {
            Payload::F64(v) => v.clone(),
            Payload::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            _ => return Err(self.bad("not a float tensor")),
        };
        let shape = self.dims.iter().map(|&d| d as usize).collect();
        Tensor::new(shape, data).map_err(|e| self.bad(e.to_string()))
    }

    pub fn as_u64s(&self) -> Result<&[u64], CheckpointError> {
        match &self.payload {
            Payload::U64(v) => Ok(v),
            _ => Err(self.bad("not an integer record")),
        }
    }

    pub fn as_f64s(&self) -> Result<&[f64], CheckpointError> {
        match &self.payload {
            Payload::F64(v) => Ok(v),
            _ => Err(self.bad("not a 64-bit float record")),
        }
    }

    pub fn as_text(&self) -> Result<&[String], CheckpointError> {
        match &self.payload {
            Payload::Text(v) => Ok(v),
            _ => Err(self.bad("not a text record")),
        }
    }
}

pub fn encode_records(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.extend_from_slice(&(r.dims.len() as u32).to_le_bytes());
        for d in &r.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        let mut payload = Vec::new();
        let dtype = match &r.payload {
            Payload::F64(v) => {
                v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                DTYPE_F64
            }
            Payload::F32(v) => {
                v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                DTYPE_F32
            }
            Payload::U64(v) => {
                v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                DTYPE_U64
            }
            Payload::Text(v) => {
                for s in v {
                    payload.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    payload.extend_from_slice(s.as_bytes());
                }
                DTYPE_TEXT
            }
        };
        out.push(dtype);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Corrupt(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

fn utf8(bytes: &[u8], what: &str) -> Result<String, CheckpointError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| CheckpointError::Corrupt(format!("{what} is not UTF-8")))
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<Record>, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 12 + 32 {
        return Err(CheckpointError::Corrupt(format!("file is only {} bytes", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::Corrupt("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let count = r.u32("record count")?;
    let mut records = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = utf8(r.take(name_len, "name")?, "record name")?;
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u64("dims")?);
        }
        let dtype = r.take(1, "dtype")?[0];
        let len = r.u64("payload length")? as usize;
        let raw = r.take(len, "payload")?;
        let count: u64 = dims.iter().product();
        let expect_len = |width: u64| -> Result<(), CheckpointError> {
            if rank == 0 || count.checked_mul(width) != Some(len as u64) {
                return Err(CheckpointError::Corrupt(format!(
                    "record {name:?}: payload of {len} bytes does not match dims {dims:?}"
                )));
            }
            Ok(())
        };
        let payload = match dtype {
            DTYPE_F64 => {
                expect_len(8)?;
                Payload::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect())
            }
            DTYPE_F32 => {
                expect_len(4)?;
                Payload::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect())
            }
            DTYPE_U64 => {
                expect_len(8)?;
                Payload::U64(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8"))).collect())
            }
            DTYPE_TEXT => {
                if rank != 1 {
                    return Err(CheckpointError::Corrupt(format!("text record {name:?} has rank {rank}")));
                }
                let mut sub = Reader { bytes: raw, pos: 0 };
                let mut items = Vec::new();
                for _ in 0..dims[0] {
                    let n = sub.u32("string length")? as usize;
                    items.push(utf8(sub.take(n, "string")?, "string")?);
                }
                if sub.pos != raw.len() {
                    return Err(CheckpointError::Corrupt(format!("text record {name:?} has trailing bytes")));
                }
                Payload::Text(items)
            }
            other => return Err(CheckpointError::Corrupt(format!("record {name:?}: unknown dtype {other}"))),
        };
        records.push(Record { name, dims, payload });
    }
    if r.pos != body.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} unexpected bytes after the last record",
            body.len() - r.pos
        )));
    }
    Ok(records)
}

/// Records indexed by name for loading.
#[derive(Debug, Default)]
pub struct RecordSet {
    records: BTreeMap<String, Record>,
}

impl RecordSet {
    pub fn new(records: Vec<Record>) -> Result<RecordSet, CheckpointError> {
        let mut map = BTreeMap::new();
        for r in records {
            let name = r.name.clone();
            if map.insert(name.clone(), r).is_some() {
                return Err(CheckpointError::Corrupt(format!("duplicate record {name:?}")));
            }
        }
        Ok(RecordSet { records: map })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.records.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Record, CheckpointError> {
        self.records.get(name).ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor, CheckpointError> {
        self.get(name)?.to_tensor()
    }

    pub fn u64(&self, name: &str) -> Result<u64, CheckpointError> {
        let r = self.get(name)?;
        match r.as_u64s()? {
            [v] => Ok(*v),
            _ => Err(r.bad("expected a single integer")),
        }
    }

    pub fn f64(&self, name: &str) -> Result<f64, CheckpointError> {
        let r = self.get(name)?;
        match r.as_f64s()? {
            [v] => Ok(*v),
            _ => Err(r.bad("expected a single float")),
        }
    }

    pub fn text(&self, name: &str) -> Result<&[String], CheckpointError> {
        self.get(name)?.as_text()
    }
}
