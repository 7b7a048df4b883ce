//! On-disk embedding cache: one file per (backend, role, text digest).
//!
//! File layout, little-endian: `EMBV`, version byte `0x01`, `u32` dim, then `dim` `f32`s.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use super::Role;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMBV";
pub const VERSION: u8 = 0x01;
const HEADER_LEN: usize = 9;

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub backend_id: String,
    pub role: Role,
    pub digest: [u8; 32],
}

impl CacheKey {
    pub fn new(backend_id: &str, role: Role, text: &str) -> Self {
        CacheKey {
            backend_id: backend_id.to_string(),
            role,
            digest: Sha256::digest(text.as_bytes()).into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    root: PathBuf,
}

impl EmbeddingCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(EmbeddingCache { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        let backend: String = key
            .backend_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
            .collect();
        self.root
            .join(backend)
            .join(key.role.as_str())
            .join(format!("{}.emb", hex::encode(key.digest)))
    }

    /// Reads a cached vector. Missing files are misses; unreadable or malformed entries,
    /// or entries of the wrong width, are misses with a warning.
    pub fn get(&self, key: &CacheKey, expected_dim: usize) -> Option<Vec<f32>> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("cache entry {} unreadable: {e}", path.display());
                return None;
            }
        };
        match decode(&bytes) {
            Some(v) if v.len() == expected_dim => Some(v),
            Some(v) => {
                log::warn!(
                    "cache entry {} has dim {}, expected {expected_dim}; ignoring",
                    path.display(),
                    v.len()
                );
                None
            }
            None => {
                log::warn!("cache entry {} is corrupt; ignoring", path.display());
                None
            }
        }
    }

    /// Writes through a temporary file and a rename, so readers never see partial entries.
    pub fn put(&self, key: &CacheKey, values: &[f32]) -> Result<()> {
        let path = self.path_for(key);
        let dir = path.parent().expect("cache path has a parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = dir.join(format!(
            ".{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(&encode(values)).map_err(|e| Error::io(&tmp, e))?;
        drop(file);
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

pub fn encode(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Option<Vec<f32>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC || bytes[4] != VERSION {
        return None;
    }
    let dim = u32::from_le_bytes(bytes[5..9].try_into().ok()?) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != dim.checked_mul(4)? {
        return None;
    }
    Some(
        body.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect(),
    )
}
