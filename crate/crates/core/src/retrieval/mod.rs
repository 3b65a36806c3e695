//! Evidence retrieval: web search, page fetch and text extraction,
//! chunking, embedding, and exact top-k cosine search over an in-memory
//! index.
//!
//! Chunks are pooled per question: all claims of one record share one
//! index, and each claim queries it for its top-k chunks.

pub mod html;

use crate::backends::{embed, web_search, BackendError, BackendSet, PageFetcher};
use crate::model::{Claim, EvidenceChunk, ModelError, RelevanceClass};
use crate::par::Executor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("fetch timed out")]
    FetchTimeout,
    #[error("http error {0}")]
    HttpError(u16),
    #[error("non-html content: {0}")]
    NonHtmlContent(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate chunk id {0}")]
    DuplicateId(String),
    #[error("claim {0} is not labeled as a factual claim")]
    NotFactual(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitterKind {
    #[default]
    Fixed,
    Recursive,
}

/// Knobs of the retrieval stage. Defaults follow the pipeline baseline:
/// top-3 search hits, 512-character fixed windows, top-5 chunks per claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub hits_per_claim: usize,
    pub window_chars: usize,
    pub splitter: SplitterKind,
    pub overlap_chars: usize,
    pub top_k: usize,
    pub max_page_bytes: usize,
    pub fetch_timeout_secs: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            hits_per_claim: 3,
            window_chars: 512,
            splitter: SplitterKind::Fixed,
            overlap_chars: 64,
            top_k: 5,
            max_page_bytes: 2 * 1024 * 1024,
            fetch_timeout_secs: 15,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.window_chars == 0 {
            return Err(RetrievalError::InvalidConfig("window_chars must be > 0".into()));
        }
        if self.overlap_chars >= self.window_chars {
            return Err(RetrievalError::InvalidConfig(format!(
                "overlap_chars {} must be < window_chars {}",
                self.overlap_chars, self.window_chars
            )));
        }
        if self.top_k == 0 {
            return Err(RetrievalError::InvalidConfig("top_k must be >= 1".into()));
        }
        if self.hits_per_claim == 0 {
            return Err(RetrievalError::InvalidConfig(
                "hits_per_claim must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fetches one URL and extracts its visible text, truncated to the page
/// byte cap. Timeouts, HTTP failures, and non-HTML content are reported
/// per URL, never aborting the surrounding pool build.
pub fn fetch_and_extract(
    url: &str,
    cfg: &RetrievalConfig,
    fetcher: &dyn PageFetcher,
) -> Result<String, RetrievalError> {
    let page = fetcher.fetch(url).map_err(|e| match e {
        BackendError::Timeout => RetrievalError::FetchTimeout,
        BackendError::HttpStatus(code) => RetrievalError::HttpError(code),
        other => RetrievalError::Backend(other),
    })?;

    let text = match &page.content_type {
        Some(ct) => {
            let ct = ct.to_lowercase();
            if ct.starts_with("text/html") || ct.starts_with("application/xhtml") {
                html::extract_text(&page.body)
            } else if ct.starts_with("text/plain") {
                page.body.clone()
            } else {
                return Err(RetrievalError::NonHtmlContent(ct));
            }
        }
        None => html::extract_text(&page.body),
    };
    Ok(truncate_bytes(&text, cfg.max_page_bytes))
}

/// Truncates to at most `max_bytes` bytes on a char boundary.
fn truncate_bytes(text: &str, max_bytes: usize) -> String {
    if text.len() <= max_bytes {
        return text.to_string();
    }
    let mut end = max_bytes;
    while end > 0 && !text.is_char_boundary(end) {
        end -= 1;
    }
    text[..end].to_string()
}

/// Consecutive non-overlapping windows of `window_chars` Unicode scalar
/// values; concatenation equals the input exactly.
pub fn chunk_fixed(text: &str, window_chars: usize) -> Vec<String> {
    assert!(window_chars > 0, "window_chars must be > 0");
    let chars: Vec<char> = text.chars().collect();
    chars
        .chunks(window_chars)
        .map(|w| w.iter().collect())
        .collect()
}

/// Windowed splitting that prefers the coarsest boundary available inside
/// each window: paragraph break, then sentence terminal or newline, then
/// word boundary, then a hard cut. Consecutive chunks share up to
/// `overlap_chars` where a word boundary permits.
pub fn chunk_recursive(text: &str, window_chars: usize, overlap_chars: usize) -> Vec<String> {
    assert!(window_chars > 0, "window_chars must be > 0");
    assert!(
        overlap_chars < window_chars,
        "overlap_chars must be < window_chars"
    );
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut chunks = Vec::new();
    let mut pos = 0usize;

    while pos < n {
        let hard_end = (pos + window_chars).min(n);
        let end = if hard_end == n {
            n
        } else {
            best_break(&chars, pos, hard_end)
        };
        let chunk: String = chars[pos..end].iter().collect();
        let trimmed = chunk.trim();
        if !trimmed.is_empty() {
            chunks.push(trimmed.to_string());
        }
        if end >= n {
            break;
        }
        let mut next = end;
        if overlap_chars > 0 {
            let floor = end.saturating_sub(overlap_chars).max(pos + 1);
            if let Some(word_start) = (floor..end)
                .find(|&k| !chars[k].is_whitespace() && (k == 0 || chars[k - 1].is_whitespace()))
            {
                next = word_start;
            }
        }
        if next <= pos {
            next = end;
        }
        pos = next;
    }
    chunks
}

fn best_break(chars: &[char], pos: usize, hard_end: usize) -> usize {
    // Paragraph break: position right after a blank line.
    for k in (pos + 2..=hard_end).rev() {
        if chars[k - 1] == '\n' && chars[k - 2] == '\n' {
            return k;
        }
    }
    // Sentence terminal followed by whitespace, or a single newline.
    for k in (pos + 1..hard_end).rev() {
        let prev = chars[k - 1];
        if prev == '\n' || (matches!(prev, '.' | '!' | '?') && chars[k].is_whitespace()) {
            return k;
        }
    }
    // Word boundary.
    for k in (pos + 1..hard_end).rev() {
        if chars[k].is_whitespace() {
            return k;
        }
    }
    hard_end
}

/// A retrieved chunk with its cosine similarity to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: EvidenceChunk,
    pub score: f32,
}

/// Exact-search in-memory index over unit-norm embeddings. Immutable once
/// built.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dimension: usize,
    chunks: Vec<EvidenceChunk>,
}

/// Builds an index over the chunks. An empty chunk list builds an empty
/// index (queries return nothing); mixed dimensions and duplicate ids are
/// rejected.
pub fn build_index(chunks: Vec<EvidenceChunk>) -> Result<VectorIndex, RetrievalError> {
    let dimension = chunks.first().map_or(0, |c| c.embedding.len());
    let mut seen = std::collections::BTreeSet::new();
    for chunk in &chunks {
        if chunk.embedding.len() != dimension {
            return Err(RetrievalError::DimensionMismatch {
                expected: dimension,
                got: chunk.embedding.len(),
            });
        }
        if !seen.insert(chunk.id.as_str()) {
            return Err(RetrievalError::DuplicateId(chunk.id.clone()));
        }
    }
    Ok(VectorIndex { dimension, chunks })
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Top-k by descending cosine similarity; ties keep insertion order
    /// (stable sort over insertion-ordered entries). Only the winners are
    /// cloned out.
    pub fn query(&self, query_vec: &[f32], top_k: usize) -> Vec<ScoredChunk> {
        let mut scored: Vec<(usize, f32)> = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, chunk)| (i, dot(query_vec, &chunk.embedding)))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        scored.truncate(top_k);
        scored
            .into_iter()
            .map(|(i, score)| ScoredChunk {
                chunk: self.chunks[i].clone(),
                score,
            })
            .collect()
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Embeds the claim text and queries the index.
pub fn query_index(
    index: &VectorIndex,
    claim_text: &str,
    top_k: usize,
    embed_backend: &dyn crate::backends::EmbedBackend,
) -> Result<Vec<ScoredChunk>, RetrievalError> {
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = embed(embed_backend, &[claim_text.to_string()])?;
    Ok(index.query(&vectors[0], top_k))
}

/// A URL that failed during pool building, with the stage error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlFailure {
    pub url: String,
    pub error: String,
}

/// The per-question evidence pool: one index over the chunks of every
/// page hit by any of the question's claims.
#[derive(Debug, Default)]
pub struct EvidencePool {
    pub index: VectorIndex,
    pub failures: Vec<UrlFailure>,
    /// URLs actually pooled, in first-seen order.
    pub urls: Vec<String>,
}

/// Searches for every factual claim of one record, fetches and chunks the
/// unique result pages, embeds all chunks in one batch, and builds the
/// question's index. Per-URL failures are recorded and skipped; a search
/// or embedding failure aborts the build.
pub fn build_question_pool(
    record_id: &str,
    claims: &[&Claim],
    cfg: &RetrievalConfig,
    backends: &BackendSet,
    executor: &Executor,
) -> Result<EvidencePool, RetrievalError> {
    cfg.validate()?;
    let mut urls: Vec<String> = Vec::new();
    for claim in claims {
        require_factual(claim)?;
        for hit in web_search(backends.search.as_ref(), &claim.text, cfg.hits_per_claim)? {
            if !urls.contains(&hit.url) {
                urls.push(hit.url);
            }
        }
    }

    let fetched: Vec<Result<String, RetrievalError>> = executor.map_ordered(&urls, |url| {
        fetch_and_extract(url, cfg, backends.fetcher.as_ref())
    });

    let mut failures = Vec::new();
    let mut texts: Vec<String> = Vec::new();
    let mut spans: Vec<(usize, String)> = Vec::new(); // (chunk count, url)
    for (url, result) in urls.iter().zip(fetched) {
        match result {
            Ok(document) => {
                let chunks = match cfg.splitter {
                    SplitterKind::Fixed => chunk_fixed(&document, cfg.window_chars),
                    SplitterKind::Recursive => {
                        chunk_recursive(&document, cfg.window_chars, cfg.overlap_chars)
                    }
                };
                let chunks: Vec<String> =
                    chunks.into_iter().filter(|c| !c.trim().is_empty()).collect();
                spans.push((chunks.len(), url.clone()));
                texts.extend(chunks);
            }
            Err(e) => {
                failures.push(UrlFailure {
                    url: url.clone(),
                    error: e.to_string(),
                });
            }
        }
    }

    if texts.is_empty() {
        return Ok(EvidencePool {
            index: VectorIndex::default(),
            failures,
            urls,
        });
    }

    let vectors = embed(backends.embed.as_ref(), &texts)?;
    let mut chunks = Vec::with_capacity(texts.len());
    let mut offset = 0usize;
    for (url_idx, (count, url)) in spans.iter().enumerate() {
        for chunk_idx in 0..*count {
            let text = &texts[offset];
            chunks.push(EvidenceChunk::new(
                format!("{record_id}-u{url_idx:02}-k{chunk_idx:03}"),
                url.clone(),
                chunk_idx,
                text.clone(),
                cfg.window_chars,
                vectors[offset].clone(),
            )?);
            offset += 1;
        }
    }

    Ok(EvidencePool {
        index: build_index(chunks)?,
        failures,
        urls,
    })
}

/// Queries the question pool for one factual claim.
pub fn retrieve_evidence(
    claim: &Claim,
    pool: &EvidencePool,
    cfg: &RetrievalConfig,
    backends: &BackendSet,
) -> Result<Vec<ScoredChunk>, RetrievalError> {
    require_factual(claim)?;
    query_index(&pool.index, &claim.text, cfg.top_k, backends.embed.as_ref())
}

/// One-claim convenience: builds a pool from this claim's own search hits
/// and queries it.
pub fn retrieve_evidence_single(
    claim: &Claim,
    cfg: &RetrievalConfig,
    backends: &BackendSet,
    executor: &Executor,
) -> Result<(Vec<ScoredChunk>, Vec<UrlFailure>), RetrievalError> {
    let pool = build_question_pool(&claim.record_id, &[claim], cfg, backends, executor)?;
    let scored = retrieve_evidence(claim, &pool, cfg, backends)?;
    Ok((scored, pool.failures))
}

fn require_factual(claim: &Claim) -> Result<(), RetrievalError> {
    if claim.relevance != Some(RelevanceClass::FactualClaim) {
        return Err(RetrievalError::NotFactual(claim.id.clone()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{MockEmbed, MockFetcher, MockNli, MockSearch};
    use crate::backends::{FetchedPage, SearchHit};
    use crate::model::ClaimOrigin;
    use std::sync::Arc;

    fn unit(dim: usize, hot: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[hot] = 1.0;
        v
    }

    fn chunk(id: &str, dim: usize, hot: usize) -> EvidenceChunk {
        EvidenceChunk::new(id, "https://example.com/x", 0, "text", 512, unit(dim, hot)).unwrap()
    }

    #[test]
    fn fixed_chunker_window_arithmetic() {
        let text = "a".repeat(1000);
        let chunks = chunk_fixed(&text, 512);
        let lens: Vec<usize> = chunks.iter().map(|c| c.chars().count()).collect();
        assert_eq!(lens, vec![512, 488]);

        let short = "b".repeat(100);
        assert_eq!(chunk_fixed(&short, 512), vec![short.clone()]);

        assert!(chunk_fixed("", 512).is_empty());
    }

    #[test]
    fn fixed_chunker_is_lossless() {
        let text = "ä".repeat(700) + "word boundary text";
        let chunks = chunk_fixed(&text, 256);
        assert_eq!(chunks.concat(), text);
        assert!(chunks.iter().all(|c| c.chars().count() <= 256));
    }

    #[test]
    fn recursive_chunker_short_text_is_identity() {
        assert_eq!(chunk_recursive("short text", 512, 64), vec!["short text"]);
        assert!(chunk_recursive("", 512, 64).is_empty());
    }

    #[test]
    fn recursive_chunker_splits_at_paragraph_break() {
        let para1 = "Sentence one of paragraph one. ".repeat(10).trim().to_string();
        let para2 = "Sentence two of paragraph two. ".repeat(10).trim().to_string();
        assert!(para1.chars().count() > 256 && para1.chars().count() < 512);
        let text = format!("{para1}\n\n{para2}");
        let chunks = chunk_recursive(&text, 512, 0);
        assert_eq!(chunks[0], para1);
        assert!(chunks.iter().all(|c| c.chars().count() <= 512));
    }

    #[test]
    fn recursive_chunker_overlap_shares_suffix() {
        let words: Vec<String> = (0..120).map(|i| format!("w{i:03}")).collect();
        let text = words.join(" ");
        let chunks = chunk_recursive(&text, 100, 30);
        assert!(chunks.len() > 1);
        for pair in chunks.windows(2) {
            let tail_word = pair[1].split_whitespace().next().unwrap();
            assert!(
                pair[0].contains(tail_word),
                "chunk {:?} does not share its head {tail_word:?} with predecessor {:?}",
                pair[1],
                pair[0]
            );
        }
    }

    #[test]
    fn truncation_respects_byte_cap() {
        let cfg = RetrievalConfig {
            max_page_bytes: 1024 * 1024,
            ..Default::default()
        };
        let big = format!("<p>{}</p>", "x".repeat(10 * 1024 * 1024));
        let fetcher = MockFetcher::new().with_html("https://example.com/big", big);
        let text = fetch_and_extract("https://example.com/big", &cfg, &fetcher).unwrap();
        assert!(text.len() <= cfg.max_page_bytes);
        assert!(!text.is_empty());
    }

    #[test]
    fn non_html_content_is_rejected() {
        let cfg = RetrievalConfig::default();
        let fetcher = MockFetcher::new().with_page(
            "https://example.com/data",
            FetchedPage {
                content_type: Some("application/pdf".into()),
                body: "%PDF-1.4".into(),
            },
        );
        assert!(matches!(
            fetch_and_extract("https://example.com/data", &cfg, &fetcher),
            Err(RetrievalError::NonHtmlContent(_))
        ));
    }

    #[test]
    fn fetch_errors_map_to_retrieval_errors() {
        let cfg = RetrievalConfig::default();
        let fetcher = MockFetcher::new();
        assert!(matches!(
            fetch_and_extract("https://example.com/missing", &cfg, &fetcher),
            Err(RetrievalError::HttpError(404))
        ));
    }

    #[test]
    fn empty_index_returns_nothing() {
        let index = build_index(vec![]).unwrap();
        assert!(index.is_empty());
        assert!(index.query(&[1.0, 0.0], 5).is_empty());
    }

    #[test]
    fn build_index_rejects_mixed_dimensions_and_duplicates() {
        let a = chunk("a", 4, 0);
        let b = EvidenceChunk::new("b", "https://example.com/x", 1, "t", 512, unit(8, 1)).unwrap();
        assert!(matches!(
            build_index(vec![a.clone(), b]),
            Err(RetrievalError::DimensionMismatch { .. })
        ));
        let dup = chunk("a", 4, 1);
        assert!(matches!(
            build_index(vec![a, dup]),
            Err(RetrievalError::DuplicateId(_))
        ));
    }

    #[test]
    fn self_similarity_ranks_first() {
        let chunks: Vec<EvidenceChunk> =
            (0..3).map(|i| chunk(&format!("c{i}"), 4, i)).collect();
        let index = build_index(chunks).unwrap();
        let hits = index.query(&unit(4, 2), 5);
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].chunk.id, "c2");
        assert!((hits[0].score - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn ties_resolve_by_insertion_order() {
        let chunks: Vec<EvidenceChunk> = (0..4).map(|i| chunk(&format!("c{i}"), 4, 0)).collect();
        let index = build_index(chunks).unwrap();
        let hits = index.query(&unit(4, 0), 3);
        let ids: Vec<&str> = hits.iter().map(|h| h.chunk.id.as_str()).collect();
        assert_eq!(ids, vec!["c0", "c1", "c2"]);
    }

    fn pool_backends(search: MockSearch, fetcher: MockFetcher) -> BackendSet {
        BackendSet {
            chat: Arc::new(crate::backends::mock::MockChat::new()),
            embed: Arc::new(MockEmbed::new(64)),
            nli: Arc::new(MockNli),
            search: Arc::new(search),
            fetcher: Arc::new(fetcher),
        }
    }

    fn factual_claim(id: &str, text: &str) -> Claim {
        let mut c = Claim::new(id, "r1", text, ClaimOrigin::Sentence, None).unwrap();
        c.relevance = Some(RelevanceClass::FactualClaim);
        c
    }

    #[test]
    fn all_fetches_failing_yields_empty_pool_with_errors() {
        let claim = factual_claim("c1", "Heat pumps move heat.");
        let hits = vec![
            SearchHit::new("https://example.com/1", "1", "", 1).unwrap(),
            SearchHit::new("https://example.com/2", "2", "", 2).unwrap(),
            SearchHit::new("https://example.com/3", "3", "", 3).unwrap(),
        ];
        let backends = pool_backends(
            MockSearch::new().with(&claim.text, hits),
            MockFetcher::new(), // every fetch 404s
        );
        let cfg = RetrievalConfig::default();
        let pool = build_question_pool("r1", &[&claim], &cfg, &backends, &Executor::sequential())
            .unwrap();
        assert!(pool.index.is_empty());
        assert_eq!(pool.failures.len(), 3);
        let scored = retrieve_evidence(&claim, &pool, &cfg, &backends).unwrap();
        assert!(scored.is_empty());
    }

    #[test]
    fn verbatim_page_ranks_first_and_respects_top_k() {
        let claim = factual_claim("c1", "Heat pumps reduce heating costs significantly.");
        let hits = vec![
            SearchHit::new("https://example.com/match", "match", "", 1).unwrap(),
            SearchHit::new("https://example.com/other", "other", "", 2).unwrap(),
        ];
        let fetcher = MockFetcher::new()
            .with_html(
                "https://example.com/match",
                "<p>Studies agree: heat pumps reduce heating costs significantly.</p>",
            )
            .with_html(
                "https://example.com/other",
                "<p>Granite is an igneous rock formed from magma.</p>",
            );
        let backends = pool_backends(MockSearch::new().with(&claim.text, hits), fetcher);
        let cfg = RetrievalConfig {
            top_k: 5,
            ..Default::default()
        };
        let pool = build_question_pool("r1", &[&claim], &cfg, &backends, &Executor::sequential())
            .unwrap();
        let scored = retrieve_evidence(&claim, &pool, &cfg, &backends).unwrap();
        assert!(scored.len() <= 5);
        assert_eq!(scored[0].chunk.url, "https://example.com/match");
        // Every returned chunk comes from this question's search hits.
        assert!(scored.iter().all(|s| pool.urls.contains(&s.chunk.url)));
    }

    #[test]
    fn non_factual_claims_are_rejected() {
        let claim = Claim::new("c1", "r1", "An opinion.", ClaimOrigin::Sentence, None).unwrap();
        let backends = pool_backends(MockSearch::new(), MockFetcher::new());
        let cfg = RetrievalConfig::default();
        assert!(matches!(
            build_question_pool("r1", &[&claim], &cfg, &backends, &Executor::sequential()),
            Err(RetrievalError::NotFactual(_))
        ));
    }

    #[test]
    fn config_validation_bounds() {
        let mut cfg = RetrievalConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.overlap_chars = cfg.window_chars;
        assert!(cfg.validate().is_err());
        cfg = RetrievalConfig {
            window_chars: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
