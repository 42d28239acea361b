//! On-disk response cache keyed by the exact request.
//!
//! Layout: one `<key>.txt` holding the response body and a `<key>.json`
//! sidecar with the model, temperature and write time.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, BackendError, ChatBackend, ChatRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub timestamp: String,
    pub model: String,
    pub temperature: f64,
}

pub struct CachedBackend {
    inner: Box<dyn ChatBackend>,
    dir: PathBuf,
    lock: RwLock<()>,
}

impl CachedBackend {
    pub fn new(inner: Box<dyn ChatBackend>, dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| BackendError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(CachedBackend {
            inner,
            dir,
            lock: RwLock::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Cache key: model, effective temperature and the full message list.
    pub fn key(&self, request: &ChatRequest) -> String {
        let temperature = request
            .temperature
            .unwrap_or_else(|| self.inner.default_temperature());
        let material = serde_json::json!({
            "model": self.inner.model_id(),
            "temperature": temperature,
            "messages": request.messages,
        });
        sha256_hex(material.to_string())
    }

    pub fn lookup(&self, request: &ChatRequest) -> Option<String> {
        let _r = self.lock.read().unwrap_or_else(|e| e.into_inner());
        fs::read_to_string(self.dir.join(format!("{}.txt", self.key(request)))).ok()
    }

    pub fn entry(&self, request: &ChatRequest) -> Option<CacheEntry> {
        let _r = self.lock.read().unwrap_or_else(|e| e.into_inner());
        let text = fs::read_to_string(self.dir.join(format!("{}.json", self.key(request)))).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn store(&self, request: &ChatRequest, response: &str) -> Result<(), BackendError> {
        let key = self.key(request);
        let entry = CacheEntry {
            timestamp: chrono::Utc::now().to_rfc3339(),
            model: self.inner.model_id().to_owned(),
            temperature: request
                .temperature
                .unwrap_or_else(|| self.inner.default_temperature()),
        };
        let meta = serde_json::to_string_pretty(&entry).expect("cache entry serializes");
        let _w = self.lock.write().unwrap_or_else(|e| e.into_inner());
        write_atomic(&self.dir.join(format!("{key}.txt")), response.as_bytes())?;
        write_atomic(&self.dir.join(format!("{key}.json")), meta.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BackendError> {
    let err = |e: std::io::Error| BackendError::Cache(format!("{}: {e}", path.display()));
    let tmp = path.with_extension(format!(
        "tmp.{}.{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    let mut f = fs::File::create(&tmp).map_err(err)?;
    f.write_all(bytes).map_err(err)?;
    f.sync_all().map_err(err)?;
    drop(f);
    fs::rename(&tmp, path).map_err(err)
}

impl ChatBackend for CachedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        if let Some(hit) = self.lookup(request) {
            return Ok(hit);
        }
        let response = self.inner.complete(request)?;
        self.store(request, &response)?;
        Ok(response)
    }

    fn complete_fresh(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let response = self.inner.complete_fresh(request)?;
        self.store(request, &response)?;
        Ok(response)
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn default_temperature(&self) -> f64 {
        self.inner.default_temperature()
    }

    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use super::*;
    use crate::backend::ChatMessage;

    struct Counter(Arc<AtomicUsize>);

    impl ChatBackend for Counter {
        fn complete(&self, r: &ChatRequest) -> Result<String, BackendError> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("{}#{n}", r.payload_or_last_user()))
        }
        fn model_id(&self) -> &str {
            "counter"
        }
        fn default_temperature(&self) -> f64 {
            0.0
        }
    }

    fn req(s: &str) -> ChatRequest {
        ChatRequest::new("t", vec![ChatMessage::user(s)])
    }

    #[test]
    fn second_call_is_served_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let n = Arc::new(AtomicUsize::new(0));
        let c = CachedBackend::new(Box::new(Counter(n.clone())), dir.path()).unwrap();
        assert_eq!(c.complete(&req("a")).unwrap(), "a#0");
        assert_eq!(c.complete(&req("a")).unwrap(), "a#0");
        assert_eq!(n.load(Ordering::SeqCst), 1);
        assert_eq!(c.entry(&req("a")).unwrap().model, "counter");

        // a new instance over the same directory still hits
        let n2 = Arc::new(AtomicUsize::new(0));
        let c2 = CachedBackend::new(Box::new(Counter(n2.clone())), dir.path()).unwrap();
        assert_eq!(c2.complete(&req("a")).unwrap(), "a#0");
        assert_eq!(n2.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn temperature_is_part_of_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let n = Arc::new(AtomicUsize::new(0));
        let c = CachedBackend::new(Box::new(Counter(n.clone())), dir.path()).unwrap();
        c.complete(&req("a")).unwrap();
        c.complete(&req("a").with_temperature(1.0)).unwrap();
        assert_eq!(n.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn fresh_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let n = Arc::new(AtomicUsize::new(0));
        let c = CachedBackend::new(Box::new(Counter(n.clone())), dir.path()).unwrap();
        c.complete(&req("a")).unwrap();
        assert_eq!(c.complete_fresh(&req("a")).unwrap(), "a#1");
        assert_eq!(c.complete(&req("a")).unwrap(), "a#1");
    }

    #[test]
    fn concurrent_writers_leave_a_readable_entry() {
        let dir = tempfile::tempdir().unwrap();
        let n = Arc::new(AtomicUsize::new(0));
        let c = CachedBackend::new(Box::new(Counter(n)), dir.path()).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| c.complete_fresh(&req("x")).unwrap());
            }
        });
        assert!(c.lookup(&req("x")).unwrap().starts_with("x#"));
        let leftovers = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .path()
                    .to_string_lossy()
                    .contains(".tmp.")
            })
            .count();
        assert_eq!(leftovers, 0);
    }
}
