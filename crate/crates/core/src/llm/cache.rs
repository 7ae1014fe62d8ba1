//! Append-only on-disk response cache: one file per request digest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::LlmRequest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    digest: String,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    task: &'a str,
    prompt: &'a str,
    model_id: &'a str,
    temperature: f64,
}

impl CacheKey {
    pub fn for_request(req: &LlmRequest) -> Self {
        let material = KeyMaterial {
            task: req.task.as_str(),
            prompt: &req.prompt,
            model_id: &req.model_id,
            temperature: req.temperature,
        };
        let bytes = serde_json::to_vec(&material).expect("key material serializes");
        Self {
            digest: hex::encode(Sha256::digest(&bytes)),
        }
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.txt", key.digest))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<String>> {
        let path = self.path(key);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Stores `raw` under `key` unless an entry already exists. The write
    /// goes to a temporary file that is renamed into place, so concurrent
    /// writers of one key leave a single complete entry.
    pub fn put(&self, key: &CacheKey, raw: &str) -> Result<()> {
        let path = self.path(key);
        if path.exists() {
            return Ok(());
        }
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            key.digest,
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(raw.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    pub fn len(&self) -> Result<usize> {
        let entries = fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        Ok(entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "txt"))
            .count())
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Task;

    fn req(prompt: &str, temperature: f64) -> LlmRequest {
        LlmRequest::new(Task::Summarize, prompt, "m", temperature).unwrap()
    }

    #[test]
    fn key_depends_on_every_field() {
        let base = CacheKey::for_request(&req("p", 0.0));
        assert_eq!(base, CacheKey::for_request(&req("p", 0.0)));
        assert_ne!(base, CacheKey::for_request(&req("q", 0.0)));
        assert_ne!(base, CacheKey::for_request(&req("p", 0.5)));
        let mut other = req("p", 0.0);
        other.task = Task::Entail;
        assert_ne!(base, CacheKey::for_request(&other));
        assert_eq!(base.digest().len(), 64);
    }

    #[test]
    fn entries_are_immutable() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let key = CacheKey::for_request(&req("p", 0.0));
        assert_eq!(cache.get(&key).unwrap(), None);
        cache.put(&key, "first").unwrap();
        cache.put(&key, "second").unwrap();
        assert_eq!(cache.get(&key).unwrap().as_deref(), Some("first"));
        assert_eq!(cache.len().unwrap(), 1);
    }

    #[test]
    fn concurrent_writers_converge() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let key = CacheKey::for_request(&req("p", 0.0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| cache.put(&key, "same").unwrap());
            }
        });
        assert_eq!(cache.get(&key).unwrap().as_deref(), Some("same"));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
