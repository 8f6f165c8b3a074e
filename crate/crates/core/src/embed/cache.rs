//! Content-addressed embedding store with an append-only file backing.
//!
//! File layout: magic `CLEMBCCH`, u32 LE version, then records of
//! `u32 id_len | id bytes | 32-byte sha256 of text | u32 dim | dim × f32 LE`.
//! A truncated trailing record (e.g. after a crash) is dropped on open.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use super::{EmbedError, EmbeddingVector};
use crate::digest::sha256;

const MAGIC: &[u8; 8] = b"CLEMBCCH";
const VERSION: u32 = 1;

type Key = (String, [u8; 32]);

#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<Key, Arc<EmbeddingVector>>>,
    writer: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

fn io_err(path: &Path, e: std::io::Error) -> EmbedError {
    EmbedError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn read_u32(buf: &[u8], at: usize) -> Option<u32> {
    buf.get(at..at + 4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
}

/// Parse records from `buf`; returns the entries and the length of the valid prefix.
fn parse_records(buf: &[u8]) -> (Vec<(Key, EmbeddingVector)>, usize) {
    let mut out = Vec::new();
    let mut pos = 0;
    loop {
        let start = pos;
        let Some(id_len) = read_u32(buf, pos) else { return (out, start) };
        pos += 4;
        let Some(id) = buf.get(pos..pos + id_len as usize) else { return (out, start) };
        let Ok(id) = std::str::from_utf8(id) else { return (out, start) };
        pos += id_len as usize;
        let Some(digest) = buf.get(pos..pos + 32) else { return (out, start) };
        let digest: [u8; 32] = digest.try_into().expect("32 bytes");
        pos += 32;
        let Some(dim) = read_u32(buf, pos) else { return (out, start) };
        pos += 4;
        let Some(raw) = buf.get(pos..pos + 4 * dim as usize) else { return (out, start) };
        pos += 4 * dim as usize;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        out.push((
            (id.to_string(), digest),
            EmbeddingVector {
                values,
                provider_id: id.to_string(),
            },
        ));
    }
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open or create a cache file, loading every complete record.
    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let mut buf = Vec::new();
            File::open(path)
                .and_then(|mut f| f.read_to_end(&mut buf))
                .map_err(|e| io_err(path, e))?;
            if buf.len() < 12 || &buf[..8] != MAGIC {
                return Err(EmbedError::CacheFormat(format!("{} is not an embedding cache", path.display())));
            }
            let version = read_u32(&buf, 8).expect("length checked");
            if version != VERSION {
                return Err(EmbedError::CacheFormat(format!("unsupported cache version {version}")));
            }
            let (records, valid) = parse_records(&buf[12..]);
            if 12 + valid < buf.len() {
                log::warn!(
                    "dropping {} trailing bytes of a partial record in {}",
                    buf.len() - 12 - valid,
                    path.display()
                );
                let f = OpenOptions::new().write(true).open(path).map_err(|e| io_err(path, e))?;
                f.set_len((12 + valid) as u64).map_err(|e| io_err(path, e))?;
            }
            for (key, v) in records {
                entries.insert(key, Arc::new(v));
            }
        } else {
            let mut f = File::create(path).map_err(|e| io_err(path, e))?;
            f.write_all(MAGIC)
                .and_then(|_| f.write_all(&VERSION.to_le_bytes()))
                .map_err(|e| io_err(path, e))?;
        }
        let file = OpenOptions::new().append(true).open(path).map_err(|e| io_err(path, e))?;
        Ok(Self {
            entries: RwLock::new(entries),
            writer: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, provider_id: &str, text: &str) -> Option<Arc<EmbeddingVector>> {
        let key = (provider_id.to_string(), sha256(text.as_bytes()));
        self.entries.read().expect("cache lock").get(&key).cloned()
    }

    /// Store a vector. If another writer got there first, the existing entry wins
    /// so every reader sees the first computed value.
    pub fn insert(&self, text: &str, vector: EmbeddingVector) -> Result<Arc<EmbeddingVector>, EmbedError> {
        let digest = sha256(text.as_bytes());
        let key = (vector.provider_id.clone(), digest);
        let mut entries = self.entries.write().expect("cache lock");
        if let Some(existing) = entries.get(&key) {
            return Ok(Arc::clone(existing));
        }
        if let Some(writer) = &self.writer {
            let mut record = Vec::with_capacity(40 + vector.provider_id.len() + 4 * vector.values.len());
            record.extend((vector.provider_id.len() as u32).to_le_bytes());
            record.extend(vector.provider_id.as_bytes());
            record.extend(digest);
            record.extend((vector.values.len() as u32).to_le_bytes());
            for v in &vector.values {
                record.extend(v.to_le_bytes());
            }
            let path = self.path.as_deref().expect("file cache has a path");
            let mut w = writer.lock().expect("writer lock");
            w.write_all(&record).and_then(|_| w.flush()).map_err(|e| io_err(path, e))?;
        }
        let v = Arc::new(vector);
        entries.insert(key, Arc::clone(&v));
        Ok(v)
    }
}
