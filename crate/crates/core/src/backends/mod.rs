//! Wire-level contracts for the external model and search services, plus
//! deterministic mocks and a persistent replay cache.
//!
//! Every remote call goes through one of the traits below. Wrapping a
//! backend in the cache layer ([`cache::CacheLayer`]) makes runs recordable
//! and replayable offline; the mock implementations in [`mock`] are pure
//! functions, so a pipeline built on them is deterministic without any
//! cache at all.

pub mod cache;
pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend {backend} unreachable: {detail}")]
    Unreachable { backend: String, detail: String },
    #[error("mock backend has no mapping for the request")]
    Miss,
    #[error("call budget exceeded")]
    BudgetExceeded,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("search quota exceeded")]
    QuotaExceeded,
    #[error("request timed out")]
    Timeout,
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error("malformed backend response: {0}")]
    InvalidResponse(String),
    #[error("offline replay miss for cache key {0}")]
    ReplayMiss(String),
    #[error("cache io: {0}")]
    CacheIo(String),
}

impl BackendError {
    /// Transport failures are worth retrying; everything else is not.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            BackendError::Timeout | BackendError::Unreachable { .. }
        )
    }
}

/// A chat-completion request. `backend_id` names the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub backend_id: String,
    #[serde(default)]
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output: Option<u32>,
}

impl ChatRequest {
    /// Classification prompts run at temperature 0 for determinism.
    pub fn new(backend_id: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        ChatRequest {
            backend_id: backend_id.into(),
            system_prompt: String::new(),
            user_prompt: user_prompt.into(),
            temperature: 0.0,
            max_output: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.user_prompt.is_empty() {
            return Err(BackendError::InvalidInput("empty user prompt".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidInput(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliVerdict {
    pub label: NliLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f32>,
}

/// One web search result, rank-ordered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub rank: usize,
}

impl SearchHit {
    pub fn new(
        url: impl Into<String>,
        title: impl Into<String>,
        snippet: impl Into<String>,
        rank: usize,
    ) -> Result<Self, BackendError> {
        let url = url.into();
        if rank < 1 {
            return Err(BackendError::InvalidInput("hit rank must be >= 1".into()));
        }
        url::Url::parse(&url)
            .map_err(|e| BackendError::InvalidInput(format!("invalid hit url {url}: {e}")))?;
        Ok(SearchHit {
            url,
            title: title.into(),
            snippet: snippet.into(),
            rank,
        })
    }
}

/// A fetched web page before text extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchedPage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<String>,
    pub body: String,
}

pub trait ChatBackend: Send + Sync {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, BackendError>;
}

pub trait EmbedBackend: Send + Sync {
    /// Raw backend vectors; callers go through [`embed`], which normalizes.
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError>;
}

pub trait NliBackend: Send + Sync {
    fn classify(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict, BackendError>;
}

pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, BackendError>;
}

pub trait PageFetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<FetchedPage, BackendError>;
}

/// Validates the request and dispatches to the backend.
pub fn chat_complete(backend: &dyn ChatBackend, req: &ChatRequest) -> Result<String, BackendError> {
    req.validate()?;
    backend.chat_complete(req)
}

/// Embeds every text and L2-normalizes each vector regardless of what the
/// backend returned.
pub fn embed(backend: &dyn EmbedBackend, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
    if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
        return Err(BackendError::EmptyInput);
    }
    let raw = backend.embed_raw(texts)?;
    if raw.len() != texts.len() {
        return Err(BackendError::InvalidResponse(format!(
            "expected {} vectors, got {}",
            texts.len(),
            raw.len()
        )));
    }
    raw.into_iter().map(normalize_vector).collect()
}

fn normalize_vector(mut v: Vec<f32>) -> Result<Vec<f32>, BackendError> {
    let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(BackendError::InvalidResponse(
            "embedding vector has zero or non-finite norm".into(),
        ));
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

pub fn nli_classify(
    backend: &dyn NliBackend,
    premise: &str,
    hypothesis: &str,
) -> Result<NliVerdict, BackendError> {
    if premise.is_empty() || hypothesis.is_empty() {
        return Err(BackendError::EmptyInput);
    }
    backend.classify(premise, hypothesis)
}

/// Searches and returns at most `k` hits in ascending rank order.
pub fn web_search(
    backend: &dyn SearchBackend,
    query: &str,
    k: usize,
) -> Result<Vec<SearchHit>, BackendError> {
    if query.trim().is_empty() {
        return Err(BackendError::InvalidInput("empty search query".into()));
    }
    if k < 1 {
        return Err(BackendError::InvalidInput("k must be >= 1".into()));
    }
    let mut hits = backend.search(query, k)?;
    hits.sort_by_key(|h| h.rank);
    hits.truncate(k);
    Ok(hits)
}

/// The full set of services one pipeline run talks to.
#[derive(Clone)]
pub struct BackendSet {
    pub chat: Arc<dyn ChatBackend>,
    pub embed: Arc<dyn EmbedBackend>,
    pub nli: Arc<dyn NliBackend>,
    pub search: Arc<dyn SearchBackend>,
    pub fetcher: Arc<dyn PageFetcher>,
}

impl BackendSet {
    /// Routes every service of this set through one cache layer.
    pub fn cached(&self, layer: cache::CacheLayer) -> BackendSet {
        BackendSet {
            chat: Arc::new(cache::CachedChat::new(self.chat.clone(), layer.clone())),
            embed: Arc::new(cache::CachedEmbed::new(self.embed.clone(), layer.clone())),
            nli: Arc::new(cache::CachedNli::new(self.nli.clone(), layer.clone())),
            search: Arc::new(cache::CachedSearch::new(self.search.clone(), layer.clone())),
            fetcher: Arc::new(cache::CachedFetcher::new(self.fetcher.clone(), layer)),
        }
    }
}

/// Placeholder for services that are not configured. Replay-mode runs use
/// it behind the cache layer, where it is never reached on a cache hit.
pub struct Unconfigured(pub &'static str);

impl ChatBackend for Unconfigured {
    fn chat_complete(&self, _req: &ChatRequest) -> Result<String, BackendError> {
        Err(self.err())
    }
}

impl EmbedBackend for Unconfigured {
    fn embed_raw(&self, _texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        Err(self.err())
    }
}

impl NliBackend for Unconfigured {
    fn classify(&self, _premise: &str, _hypothesis: &str) -> Result<NliVerdict, BackendError> {
        Err(self.err())
    }
}

impl SearchBackend for Unconfigured {
    fn search(&self, _query: &str, _k: usize) -> Result<Vec<SearchHit>, BackendError> {
        Err(self.err())
    }
}

impl PageFetcher for Unconfigured {
    fn fetch(&self, _url: &str) -> Result<FetchedPage, BackendError> {
        Err(self.err())
    }
}

impl Unconfigured {
    fn err(&self) -> BackendError {
        BackendError::Unreachable {
            backend: self.0.to_string(),
            detail: "no endpoint configured".into(),
        }
    }
}
