//! Cache-ID indexed KV store with a bounded memory tier and a disk tier.
//!
//! Every chunk is written through to disk on `put`; the memory tier is an LRU
//! over those files. When resident bytes exceed the capacity, the least
//! recently used chunks are dropped from memory (they stay on disk) and come
//! back on the next `get`. Reopening a store over the same directory restores
//! every chunk that was not expired.

mod chunk;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use lru::LruCache;

pub use chunk::{CacheId, KvChunk};

use crate::error::{PicError, Result};

const CHUNK_EXT: &str = "pickv";
const NEXT_ID_FILE: &str = "NEXT_ID";

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub memory_capacity_bytes: usize,
    pub disk_path: PathBuf,
}

impl StoreConfig {
    pub fn new(memory_capacity_bytes: usize, disk_path: impl Into<PathBuf>) -> Self {
        Self { memory_capacity_bytes, disk_path: disk_path.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expiry {
    Removed { freed_memory_bytes: usize },
    AlreadyAbsent,
}

impl Expiry {
    pub fn removed(self) -> bool {
        matches!(self, Self::Removed { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StoreStats {
    pub live_chunks: usize,
    pub resident_chunks: usize,
    pub resident_bytes: usize,
    pub memory_capacity_bytes: usize,
    pub spills: u64,
    pub disk_loads: u64,
}

impl StoreStats {
    /// Context cache ratio: resident cache bytes over memory capacity.
    pub fn ccr(&self) -> f64 {
        self.resident_bytes as f64 / self.memory_capacity_bytes as f64
    }
}

struct Inner {
    next_id: u64,
    /// Every live chunk and its footprint; all of them have a file on disk.
    live: HashMap<CacheId, usize>,
    memory: LruCache<CacheId, Arc<KvChunk>>,
    resident_bytes: usize,
    spills: u64,
    disk_loads: u64,
}

impl Inner {
    fn admit(&mut self, id: CacheId, chunk: Arc<KvChunk>, bytes: usize, capacity: usize) {
        while self.resident_bytes + bytes > capacity {
            match self.memory.pop_lru() {
                Some((_, evicted)) => {
                    self.resident_bytes -= evicted.footprint_bytes();
                    self.spills += 1;
                }
                None => break,
            }
        }
        self.resident_bytes += bytes;
        self.memory.put(id, chunk);
    }
}

pub struct KvStore {
    config: StoreConfig,
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for KvStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KvStore").field("config", &self.config).field("stats", &self.stats()).finish()
    }
}

impl KvStore {
    /// Opens (or creates) a store rooted at `config.disk_path`, indexing any
    /// chunk files already there. Nothing is loaded into memory eagerly.
    pub fn open(config: StoreConfig) -> Result<Self> {
        if config.memory_capacity_bytes == 0 {
            return Err(PicError::Capacity("memory capacity must be non-zero".into()));
        }
        std::fs::create_dir_all(&config.disk_path)?;
        let mut live = HashMap::new();
        let mut max_seen = 0;
        for entry in std::fs::read_dir(&config.disk_path)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some(CHUNK_EXT) {
                continue;
            }
            let mut header = [0u8; chunk::HEADER_LEN];
            {
                use std::io::Read;
                std::fs::File::open(&path)?.read_exact(&mut header)?;
            }
            let header = chunk::decode_header(&header, &path)?;
            max_seen = max_seen.max(header.id.0);
            live.insert(header.id, header.footprint_bytes());
        }
        let persisted = match std::fs::read_to_string(config.disk_path.join(NEXT_ID_FILE)) {
            Ok(s) => s.trim().parse().map_err(|_| PicError::Format {
                path: config.disk_path.join(NEXT_ID_FILE),
                reason: format!("not an id: {s:?}"),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 1,
            Err(e) => return Err(e.into()),
        };
        let inner = Inner {
            next_id: persisted.max(max_seen + 1),
            live,
            memory: LruCache::unbounded(),
            resident_bytes: 0,
            spills: 0,
            disk_loads: 0,
        };
        Ok(Self { config, inner: Mutex::new(inner) })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn chunk_path(&self, id: CacheId) -> PathBuf {
        self.config.disk_path.join(format!("{}.{CHUNK_EXT}", id.0))
    }

    pub fn put(&self, chunk: KvChunk) -> Result<CacheId> {
        chunk.validate()?;
        let bytes = chunk.footprint_bytes();
        if bytes > self.config.memory_capacity_bytes {
            return Err(PicError::Capacity(format!(
                "chunk of {bytes} bytes exceeds memory capacity {}",
                self.config.memory_capacity_bytes
            )));
        }
        let id = {
            let mut inner = self.lock();
            let id = CacheId(inner.next_id);
            inner.next_id += 1;
            write_atomic(&self.config.disk_path.join(NEXT_ID_FILE), inner.next_id.to_string().as_bytes())?;
            id
        };
        write_atomic(&self.chunk_path(id), &chunk::encode(id, &chunk))?;
        let mut inner = self.lock();
        inner.live.insert(id, bytes);
        inner.admit(id, Arc::new(chunk), bytes, self.config.memory_capacity_bytes);
        Ok(id)
    }

    /// Returns an immutable handle; it stays valid even if the id is expired
    /// while the caller holds it.
    pub fn get(&self, id: CacheId) -> Result<Arc<KvChunk>> {
        {
            let mut inner = self.lock();
            if let Some(chunk) = inner.memory.get(&id) {
                return Ok(Arc::clone(chunk));
            }
            if !inner.live.contains_key(&id) {
                return Err(PicError::MissingCache(id));
            }
        }
        let path = self.chunk_path(id);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(PicError::MissingCache(id)),
            Err(e) => return Err(e.into()),
        };
        let (stored_id, chunk) = chunk::decode(&bytes, &path)?;
        if stored_id != id {
            return Err(PicError::Format { path, reason: format!("file holds id {stored_id}") });
        }
        let mut inner = self.lock();
        if !inner.live.contains_key(&id) {
            return Err(PicError::MissingCache(id));
        }
        if let Some(existing) = inner.memory.get(&id) {
            return Ok(Arc::clone(existing));
        }
        let chunk = Arc::new(chunk);
        let footprint = chunk.footprint_bytes();
        inner.disk_loads += 1;
        inner.admit(id, Arc::clone(&chunk), footprint, self.config.memory_capacity_bytes);
        Ok(chunk)
    }

    pub fn contains(&self, id: CacheId) -> bool {
        self.lock().live.contains_key(&id)
    }

    /// Invalidates `id` in both tiers. Idempotent.
    pub fn expire(&self, id: CacheId) -> Result<Expiry> {
        let mut inner = self.lock();
        if inner.live.remove(&id).is_none() {
            return Ok(Expiry::AlreadyAbsent);
        }
        let freed = match inner.memory.pop(&id) {
            Some(chunk) => {
                let b = chunk.footprint_bytes();
                inner.resident_bytes -= b;
                b
            }
            None => 0,
        };
        match std::fs::remove_file(self.chunk_path(id)) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(Expiry::Removed { freed_memory_bytes: freed })
    }

    pub fn stats(&self) -> StoreStats {
        let inner = self.lock();
        StoreStats {
            live_chunks: inner.live.len(),
            resident_chunks: inner.memory.len(),
            resident_bytes: inner.resident_bytes,
            memory_capacity_bytes: self.config.memory_capacity_bytes,
            spills: inner.spills,
            disk_loads: inner.disk_loads,
        }
    }

    pub fn live_ids(&self) -> Vec<CacheId> {
        let mut ids: Vec<_> = self.lock().live.keys().copied().collect();
        ids.sort();
        ids
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
