//! Persistent replay cache keyed by canonicalized request hashes.
//!
//! One file per entry, filename = hex of the key, payload = raw response
//! bytes. Record mode fills the cache on misses; replay mode turns misses
//! into errors so an offline run can never silently reach upstream.

use super::{
    BackendError, ChatBackend, ChatRequest, EmbedBackend, FetchedPage, NliBackend, NliVerdict,
    PageFetcher, SearchBackend, SearchHit,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::SystemTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Call upstream on every request, no cache I/O.
    Live,
    /// Read through the cache; fill it on misses.
    #[default]
    Record,
    /// Cache only; misses are errors. No upstream calls ever happen.
    Replay,
}

/// Remaining upstream-call allowance shared across all cached backends of
/// a run. Cache hits do not consume budget.
#[derive(Debug)]
pub struct CallBudget {
    remaining: AtomicI64,
}

impl CallBudget {
    pub fn new(max_calls: u32) -> Self {
        CallBudget {
            remaining: AtomicI64::new(i64::from(max_calls)),
        }
    }

    fn take(&self) -> Result<(), BackendError> {
        if self.remaining.fetch_sub(1, Ordering::SeqCst) <= 0 {
            Err(BackendError::BudgetExceeded)
        } else {
            Ok(())
        }
    }
}

/// A materialized cache entry.
#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub key: String,
    pub payload: Vec<u8>,
    pub created_at: SystemTime,
}

/// On-disk response store.
pub struct ResponseCache {
    root: PathBuf,
    // Serializes writers per key; readers never take these locks.
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let root = root.into();
        std::fs::create_dir_all(&root)
            .map_err(|e| BackendError::CacheIo(format!("create {}: {e}", root.display())))?;
        Ok(ResponseCache {
            root,
            key_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(key)
    }

    pub fn read(&self, key: &str) -> Result<Option<Vec<u8>>, BackendError> {
        match std::fs::read(self.path_for(key)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(BackendError::CacheIo(format!("read {key}: {e}"))),
        }
    }

    /// Atomic write: temp file in the same directory, then rename.
    pub fn write(&self, key: &str, payload: &[u8]) -> Result<(), BackendError> {
        let tmp = self.root.join(format!(".{key}.tmp"));
        std::fs::write(&tmp, payload)
            .map_err(|e| BackendError::CacheIo(format!("write {key}: {e}")))?;
        std::fs::rename(&tmp, self.path_for(key))
            .map_err(|e| BackendError::CacheIo(format!("commit {key}: {e}")))?;
        Ok(())
    }

    pub fn entry(&self, key: &str) -> Result<Option<CacheEntry>, BackendError> {
        let path = self.path_for(key);
        let payload = match self.read(key)? {
            Some(p) => p,
            None => return Ok(None),
        };
        let created_at = std::fs::metadata(&path)
            .and_then(|m| m.modified())
            .unwrap_or(SystemTime::UNIX_EPOCH);
        Ok(Some(CacheEntry {
            key: key.to_string(),
            payload,
            created_at,
        }))
    }

    fn lock_for(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().expect("key lock table");
        locks.entry(key.to_string()).or_default().clone()
    }
}

/// Serializes a JSON value with object keys sorted recursively, so two
/// requests differing only in field order hash identically.
pub fn canonical_json(value: &serde_json::Value) -> String {
    fn write(value: &serde_json::Value, out: &mut String) {
        match value {
            serde_json::Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, key) in keys.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(key).expect("string"));
                    out.push(':');
                    write(&map[*key], out);
                }
                out.push('}');
            }
            serde_json::Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            other => out.push_str(&serde_json::to_string(other).expect("scalar")),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

/// Cache key for a request descriptor: hex SHA-256 of its canonical form.
pub fn request_key(descriptor: &serde_json::Value) -> String {
    let canonical = canonical_json(descriptor);
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Shared caching behavior for all backend kinds.
#[derive(Clone)]
pub struct CacheLayer {
    store: Option<Arc<ResponseCache>>,
    mode: CacheMode,
    budget: Option<Arc<CallBudget>>,
}

impl CacheLayer {
    pub fn new(store: Arc<ResponseCache>, mode: CacheMode) -> Self {
        CacheLayer {
            store: Some(store),
            mode,
            budget: None,
        }
    }

    /// No cache I/O at all; still enforces the call budget if one is set.
    pub fn live() -> Self {
        CacheLayer {
            store: None,
            mode: CacheMode::Live,
            budget: None,
        }
    }

    pub fn with_budget(mut self, budget: Arc<CallBudget>) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    fn resolve<F>(&self, descriptor: &serde_json::Value, call: F) -> Result<Vec<u8>, BackendError>
    where
        F: FnOnce() -> Result<Vec<u8>, BackendError>,
    {
        let store = match (&self.store, self.mode) {
            (Some(store), CacheMode::Record | CacheMode::Replay) => store,
            _ => {
                self.spend()?;
                return call();
            }
        };
        let key = request_key(descriptor);
        if let Some(hit) = store.read(&key)? {
            return Ok(hit);
        }
        if self.mode == CacheMode::Replay {
            return Err(BackendError::ReplayMiss(key));
        }
        let lock = store.lock_for(&key);
        let _guard = lock.lock().expect("key lock");
        if let Some(hit) = store.read(&key)? {
            return Ok(hit);
        }
        self.spend()?;
        let payload = call()?;
        store.write(&key, &payload)?;
        Ok(payload)
    }

    fn spend(&self) -> Result<(), BackendError> {
        match &self.budget {
            Some(budget) => budget.take(),
            None => Ok(()),
        }
    }
}

fn decode_json<T: serde::de::DeserializeOwned>(payload: &[u8]) -> Result<T, BackendError> {
    serde_json::from_slice(payload)
        .map_err(|e| BackendError::CacheIo(format!("corrupt cache payload: {e}")))
}

fn encode_json<T: Serialize>(value: &T) -> Result<Vec<u8>, BackendError> {
    serde_json::to_vec(value).map_err(|e| BackendError::CacheIo(format!("encode payload: {e}")))
}

pub struct CachedChat {
    inner: Arc<dyn ChatBackend>,
    layer: CacheLayer,
}

impl CachedChat {
    pub fn new(inner: Arc<dyn ChatBackend>, layer: CacheLayer) -> Self {
        CachedChat { inner, layer }
    }
}

impl ChatBackend for CachedChat {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let descriptor = serde_json::json!({
            "kind": "chat",
            "request": req,
        });
        let payload = self
            .layer
            .resolve(&descriptor, || {
                self.inner.chat_complete(req).map(String::into_bytes)
            })?;
        String::from_utf8(payload)
            .map_err(|e| BackendError::CacheIo(format!("non-utf8 chat payload: {e}")))
    }
}

pub struct CachedEmbed {
    inner: Arc<dyn EmbedBackend>,
    layer: CacheLayer,
}

impl CachedEmbed {
    pub fn new(inner: Arc<dyn EmbedBackend>, layer: CacheLayer) -> Self {
        CachedEmbed { inner, layer }
    }
}

impl EmbedBackend for CachedEmbed {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        let descriptor = serde_json::json!({
            "kind": "embed",
            "texts": texts,
        });
        let payload = self.layer.resolve(&descriptor, || {
            self.inner.embed_raw(texts).and_then(|v| encode_json(&v))
        })?;
        decode_json(&payload)
    }
}

pub struct CachedNli {
    inner: Arc<dyn NliBackend>,
    layer: CacheLayer,
}

impl CachedNli {
    pub fn new(inner: Arc<dyn NliBackend>, layer: CacheLayer) -> Self {
        CachedNli { inner, layer }
    }
}

impl NliBackend for CachedNli {
    fn classify(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict, BackendError> {
        let descriptor = serde_json::json!({
            "kind": "nli",
            "premise": premise,
            "hypothesis": hypothesis,
        });
        let payload = self.layer.resolve(&descriptor, || {
            self.inner
                .classify(premise, hypothesis)
                .and_then(|v| encode_json(&v))
        })?;
        decode_json(&payload)
    }
}

pub struct CachedSearch {
    inner: Arc<dyn SearchBackend>,
    layer: CacheLayer,
}

impl CachedSearch {
    pub fn new(inner: Arc<dyn SearchBackend>, layer: CacheLayer) -> Self {
        CachedSearch { inner, layer }
    }
}

impl SearchBackend for CachedSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, BackendError> {
        let descriptor = serde_json::json!({
            "kind": "search",
            "query": query,
            "k": k,
        });
        let payload = self.layer.resolve(&descriptor, || {
            self.inner.search(query, k).and_then(|v| encode_json(&v))
        })?;
        decode_json(&payload)
    }
}

pub struct CachedFetcher {
    inner: Arc<dyn PageFetcher>,
    layer: CacheLayer,
}

impl CachedFetcher {
    pub fn new(inner: Arc<dyn PageFetcher>, layer: CacheLayer) -> Self {
        CachedFetcher { inner, layer }
    }
}

impl PageFetcher for CachedFetcher {
    fn fetch(&self, url: &str) -> Result<FetchedPage, BackendError> {
        let descriptor = serde_json::json!({
            "kind": "fetch",
            "url": url,
        });
        let payload = self.layer.resolve(&descriptor, || {
            self.inner.fetch(url).and_then(|v| encode_json(&v))
        })?;
        decode_json(&payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::AtomicUsize;

    struct CountingChat {
        reply: String,
        calls: AtomicUsize,
    }

    impl ChatBackend for CountingChat {
        fn chat_complete(&self, _req: &ChatRequest) -> Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.reply.clone())
        }
    }

    fn temp_cache() -> (tempfile::TempDir, Arc<ResponseCache>) {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        (dir, cache)
    }

    #[test]
    fn record_mode_calls_upstream_once() {
        let (_dir, cache) = temp_cache();
        let inner = Arc::new(CountingChat {
            reply: "ok".into(),
            calls: AtomicUsize::new(0),
        });
        let cached = CachedChat::new(inner.clone(), CacheLayer::new(cache, CacheMode::Record));
        let req = ChatRequest::new("m", "hello");
        let a = cached.chat_complete(&req).unwrap();
        let b = cached.chat_complete(&req).unwrap();
        assert_eq!(a, "ok");
        assert_eq!(a, b);
        assert_eq!(inner.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn replay_mode_never_reaches_upstream() {
        let (_dir, cache) = temp_cache();
        let inner = Arc::new(CountingChat {
            reply: "ok".into(),
            calls: AtomicUsize::new(0),
        });
        let req = ChatRequest::new("m", "hello");

        let recorder = CachedChat::new(
            inner.clone(),
            CacheLayer::new(cache.clone(), CacheMode::Record),
        );
        recorder.chat_complete(&req).unwrap();

        let replayer = CachedChat::new(inner.clone(), CacheLayer::new(cache, CacheMode::Replay));
        assert_eq!(replayer.chat_complete(&req).unwrap(), "ok");
        assert_eq!(inner.calls.load(Ordering::SeqCst), 1);

        let miss = ChatRequest::new("m", "different");
        assert!(matches!(
            replayer.chat_complete(&miss),
            Err(BackendError::ReplayMiss(_))
        ));
    }

    #[test]
    fn key_ignores_field_order() {
        let a: serde_json::Value =
            serde_json::from_str(r#"{"user_prompt":"p","backend_id":"m","temperature":0.0}"#)
                .unwrap();
        let b: serde_json::Value =
            serde_json::from_str(r#"{"temperature":0.0,"backend_id":"m","user_prompt":"p"}"#)
                .unwrap();
        assert_eq!(request_key(&a), request_key(&b));
        assert_eq!(
            canonical_json(&a),
            r#"{"backend_id":"m","temperature":0.0,"user_prompt":"p"}"#
        );
    }

    #[test]
    fn entries_expose_payload_and_timestamp() {
        let (_dir, cache) = temp_cache();
        assert!(cache.entry("absent").unwrap().is_none());
        cache.write("abc", b"payload bytes").unwrap();
        let entry = cache.entry("abc").unwrap().unwrap();
        assert_eq!(entry.key, "abc");
        assert_eq!(entry.payload, b"payload bytes");
        assert!(entry.created_at > SystemTime::UNIX_EPOCH);
    }

    #[test]
    fn budget_exhaustion_errors() {
        let inner = Arc::new(CountingChat {
            reply: "ok".into(),
            calls: AtomicUsize::new(0),
        });
        let layer = CacheLayer::live().with_budget(Arc::new(CallBudget::new(2)));
        let cached = CachedChat::new(inner, layer);
        let req = ChatRequest::new("m", "p");
        assert!(cached.chat_complete(&req).is_ok());
        assert!(cached.chat_complete(&req).is_ok());
        assert!(matches!(
            cached.chat_complete(&req),
            Err(BackendError::BudgetExceeded)
        ));
    }

    #[test]
    fn concurrent_duplicate_requests_hit_upstream_once() {
        let (_dir, cache) = temp_cache();
        let inner = Arc::new(CountingChat {
            reply: "ok".into(),
            calls: AtomicUsize::new(0),
        });
        let cached = Arc::new(CachedChat::new(
            inner.clone(),
            CacheLayer::new(cache, CacheMode::Record),
        ));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let cached = cached.clone();
                std::thread::spawn(move || {
                    cached.chat_complete(&ChatRequest::new("m", "same")).unwrap()
                })
            })
            .collect();
        for handle in handles {
            assert_eq!(handle.join().unwrap(), "ok");
        }
        assert_eq!(inner.calls.load(Ordering::SeqCst), 1);
    }

    proptest! {
        #[test]
        fn cache_round_trip_is_byte_identical(payload in proptest::collection::vec(any::<u8>(), 0..512)) {
            let (_dir, cache) = temp_cache();
            cache.write("abc123", &payload).unwrap();
            prop_assert_eq!(cache.read("abc123").unwrap().unwrap(), payload);
        }
    }
}
