//! Binary store format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "PVE1"
//! version      u16      FORMAT_VERSION
//! dim          u32      0 only for an empty store
//! count        u64      number of records
//! model_name   u16 len + UTF-8
//! record*count:
//!   utterance_id  u16 len + UTF-8
//!   identity_id   u16 len + UTF-8
//!   label         u8   0 = bonafide, 1 = spoof
//!   dataset       u16 len + UTF-8
//!   values        dim x f32
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::{Embedding, EmbeddingStore, Label, RecordError, StoreError, UtteranceRecord};

pub const MAGIC: [u8; 4] = *b"PVE1";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BinaryErrorKind {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
    #[error("invalid label byte {0}")]
    InvalidLabel(u8),
    #[error("header declares dim 0 but {0} records")]
    ZeroDim(u64),
    #[error("{trailing} bytes remain after the {declared} declared records")]
    CountMismatch { declared: u64, trailing: u64 },
    #[error("{field} is {len} bytes, longer than the u16 length prefix allows")]
    FieldTooLong { field: &'static str, len: usize },
    #[error("invalid record: {0}")]
    Record(RecordError),
}

/// A parse (or encode) failure at a byte offset into the file.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("byte offset {offset}: {kind}")]
pub struct BinaryError {
    pub offset: u64,
    pub kind: BinaryErrorKind,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, kind: BinaryErrorKind) -> BinaryError {
        BinaryError {
            offset: self.pos as u64,
            kind,
        }
    }

    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], BinaryError> {
        if self.buf.len() - self.pos < n {
            return Err(BinaryError {
                offset: self.buf.len() as u64,
                kind: BinaryErrorKind::Truncated(field),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], BinaryError> {
        Ok(self.take(N, field)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, BinaryError> {
        Ok(self.array::<1>(field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, BinaryError> {
        self.array(field).map(u16::from_le_bytes)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, BinaryError> {
        self.array(field).map(u32::from_le_bytes)
    }

    fn u64(&mut self, field: &'static str) -> Result<u64, BinaryError> {
        self.array(field).map(u64::from_le_bytes)
    }

    fn string(&mut self, field: &'static str) -> Result<String, BinaryError> {
        let len = self.u16(field)? as usize;
        let start = self.pos;
        let bytes = self.take(len, field)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| BinaryError {
            offset: start as u64,
            kind: BinaryErrorKind::InvalidUtf8(field),
        })
    }
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<EmbeddingStore, StoreError> {
    let bytes = fs::read(path)?;
    Ok(decode(&bytes)?)
}

pub(crate) fn decode(buf: &[u8]) -> Result<EmbeddingStore, BinaryError> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(4, "magic").ok() != Some(&MAGIC[..]) {
        return Err(BinaryError {
            offset: 0,
            kind: BinaryErrorKind::BadMagic,
        });
    }
    let version_at = cur.pos;
    let version = cur.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(BinaryError {
            offset: version_at as u64,
            kind: BinaryErrorKind::UnsupportedVersion(version),
        });
    }
    let dim = cur.u32("dim")? as usize;
    let count = cur.u64("record count")?;
    let model_name = cur.string("model_name")?;
    if dim == 0 && count > 0 {
        return Err(cur.err(BinaryErrorKind::ZeroDim(count)));
    }

    let mut store = EmbeddingStore::new(model_name);
    // Smallest possible record: three empty strings, a label and the values.
    let min_record = 7 + 4 * dim;
    let capacity = (count as usize).min((buf.len() - cur.pos) / min_record.max(1));
    store.records.reserve(capacity);

    for _ in 0..count {
        let record_at = cur.pos;
        let utterance_id = cur.string("utterance_id")?;
        let identity_id = cur.string("identity_id")?;
        let label_at = cur.pos;
        let label = match cur.u8("label")? {
            0 => Label::BonaFide,
            1 => Label::Spoof,
            other => {
                return Err(BinaryError {
                    offset: label_at as u64,
                    kind: BinaryErrorKind::InvalidLabel(other),
                })
            }
        };
        let dataset = cur.string("dataset")?;
        let raw = cur.take(4 * dim, "embedding values")?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        let record_err = |e: RecordError| BinaryError {
            offset: record_at as u64,
            kind: BinaryErrorKind::Record(e),
        };
        let embedding = Embedding::new(values).map_err(record_err)?;
        store
            .push(UtteranceRecord {
                utterance_id,
                identity_id,
                label,
                dataset,
                embedding,
            })
            .map_err(record_err)?;
    }

    if cur.pos != buf.len() {
        return Err(cur.err(BinaryErrorKind::CountMismatch {
            declared: count,
            trailing: (buf.len() - cur.pos) as u64,
        }));
    }
    Ok(store)
}

pub fn write_binary(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let bytes = encode(store)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn encode(store: &EmbeddingStore) -> Result<Vec<u8>, BinaryError> {
    fn put_str(out: &mut Vec<u8>, field: &'static str, s: &str) -> Result<(), BinaryError> {
        let len = u16::try_from(s.len()).map_err(|_| BinaryError {
            offset: out.len() as u64,
            kind: BinaryErrorKind::FieldTooLong {
                field,
                len: s.len(),
            },
        })?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(s.as_bytes());
        Ok(())
    }

    let dim = store.dim().unwrap_or(0);
    let mut out = Vec::with_capacity(64 + store.len() * (32 + 4 * dim));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    put_str(&mut out, "model_name", store.model_name())?;
    for r in store.records() {
        put_str(&mut out, "utterance_id", &r.utterance_id)?;
        put_str(&mut out, "identity_id", &r.identity_id)?;
        out.push(match r.label {
            Label::BonaFide => 0,
            Label::Spoof => 1,
        });
        put_str(&mut out, "dataset", &r.dataset)?;
        for v in r.embedding.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// True when `bytes` starts with the binary store magic.
pub fn is_binary(bytes: &[u8]) -> bool {
    bytes.starts_with(&MAGIC)
}
