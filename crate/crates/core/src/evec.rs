//! EVEC embedding stores.
//!
//! Little-endian layout:
//!
//! ```text
//! "EVEC" | u16 version = 1 | u16 reserved = 0 | u32 dim | u64 count
//! count records: u16 id_byte_length | id (UTF-8) | dim * f32
//! ```

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use indexmap::map::Entry;
use indexmap::IndexMap;
use thiserror::Error;

use crate::binio::{Cursor, ShortRead};
use crate::features::EmbeddingVector;

pub const MAGIC: &[u8; 4] = b"EVEC";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum EvecError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not an EVEC file (magic bytes {found:02x?})")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported EVEC version {0}")]
    UnsupportedVersion(u16),
    #[error("EVEC file truncated at offset {offset}: header promised {count} records, found {complete} complete")]
    Truncated {
        offset: usize,
        count: u64,
        complete: u64,
    },
    #[error("duplicate id {id:?} at offset {offset}")]
    DuplicateId { id: String, offset: usize },
    #[error("inconsistent header: {0}")]
    Inconsistent(String),
    #[error("id at offset {offset} is not valid UTF-8")]
    BadId { offset: usize },
    #[error("non-finite value in vector {id:?}")]
    NonFinite { id: String },
    #[error("vector {id:?} has length {found}, store dim is {dim}")]
    WrongDim {
        id: String,
        dim: usize,
        found: usize,
    },
    #[error("id {id:?} is empty or longer than 65535 bytes")]
    BadIdLength { id: String },
}

/// Embeddings of one dimension keyed by record id, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvecStore {
    dim: usize,
    entries: IndexMap<String, Vec<f32>>,
}

impl EvecStore {
    pub fn new(dim: usize) -> Result<Self, EvecError> {
        if dim == 0 || u32::try_from(dim).is_err() {
            return Err(EvecError::Inconsistent(format!("dim {dim} out of range")));
        }
        Ok(Self {
            dim,
            entries: IndexMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, values: Vec<f32>) -> Result<(), EvecError> {
        let id = id.into();
        if id.is_empty() || id.len() > u16::MAX as usize {
            return Err(EvecError::BadIdLength { id });
        }
        if values.len() != self.dim {
            return Err(EvecError::WrongDim {
                id,
                dim: self.dim,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EvecError::NonFinite { id });
        }
        match self.entries.entry(id) {
            Entry::Occupied(e) => Err(EvecError::DuplicateId {
                id: e.key().clone(),
                offset: 0,
            }),
            Entry::Vacant(e) => {
                e.insert(values);
                Ok(())
            }
        }
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn embedding(&self, id: &str) -> Option<EmbeddingVector> {
        self.get(id)
            .map(|v| EmbeddingVector::from_f32(v).expect("store holds finite non-empty vectors"))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let body: usize = self
            .entries
            .keys()
            .map(|k| 2 + k.len() + 4 * self.dim)
            .sum();
        let mut out = Vec::with_capacity(HEADER_LEN + body);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (id, values) in &self.entries {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EvecError> {
        let mut cur = Cursor::new(bytes);
        let magic = cur.take(4).map_err(|_| EvecError::BadMagic {
            found: bytes.to_vec(),
        })?;
        if magic != MAGIC {
            return Err(EvecError::BadMagic {
                found: magic.to_vec(),
            });
        }
        let header_short = |e: ShortRead| EvecError::Truncated {
            offset: e.offset,
            count: 0,
            complete: 0,
        };
        let version = cur.u16().map_err(header_short)?;
        if version != VERSION {
            return Err(EvecError::UnsupportedVersion(version));
        }
        let reserved = cur.u16().map_err(header_short)?;
        if reserved != 0 {
            return Err(EvecError::Inconsistent(format!(
                "reserved field is {reserved}"
            )));
        }
        let dim = cur.u32().map_err(header_short)? as usize;
        let count = cur.u64().map_err(header_short)?;
        if dim == 0 {
            return Err(EvecError::Inconsistent("dim is 0".into()));
        }
        // Every record takes at least 2 + 1 + 4 * dim bytes.
        let min_record = 3 + 4 * dim as u64;
        if count.saturating_mul(min_record) > cur.remaining() as u64 {
            return Err(EvecError::Truncated {
                offset: bytes.len(),
                count,
                complete: (cur.remaining() as u64) / min_record,
            });
        }

        let mut store = Self::new(dim)?;
        store.entries.reserve(count as usize);
        for complete in 0..count {
            let truncated = |e: ShortRead| EvecError::Truncated {
                offset: e.offset,
                count,
                complete,
            };
            let record_at = cur.offset();
            let id_len = cur.u16().map_err(truncated)? as usize;
            let id_at = cur.offset();
            let id_bytes = cur.take(id_len).map_err(truncated)?;
            let id = std::str::from_utf8(id_bytes)
                .map_err(|_| EvecError::BadId { offset: id_at })?
                .to_string();
            let values = cur.f32s(dim).map_err(truncated)?;
            match store.insert(id, values) {
                Err(EvecError::DuplicateId { id, .. }) => {
                    return Err(EvecError::DuplicateId {
                        id,
                        offset: record_at,
                    })
                }
                other => other?,
            }
        }
        if cur.remaining() > 0 {
            return Err(EvecError::Inconsistent(format!(
                "{} bytes after the {count} records promised by the header",
                cur.remaining()
            )));
        }
        Ok(store)
    }
}

pub fn write_evec(store: &EvecStore, path: impl AsRef<Path>) -> Result<(), EvecError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&store.to_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_evec(path: impl AsRef<Path>) -> Result<EvecStore, EvecError> {
    EvecStore::from_bytes(&fs::read(path)?)
}
