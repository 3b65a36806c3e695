//! Deterministic mock backends. Each one is a pure function of its inputs
//! and its construction-time mappings: no hidden state, no wall clock.

use super::{
    BackendError, ChatBackend, ChatRequest, EmbedBackend, FetchedPage, NliBackend, NliLabel,
    NliVerdict, PageFetcher, SearchBackend, SearchHit,
};
use crate::model::normalize_text;
use std::collections::BTreeMap;

/// Chat backend backed by an exact prompt → reply mapping.
#[derive(Debug, Default, Clone)]
pub struct MockChat {
    replies: BTreeMap<String, String>,
}

impl MockChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, user_prompt: impl Into<String>, reply: impl Into<String>) -> Self {
        self.replies.insert(user_prompt.into(), reply.into());
        self
    }

    pub fn insert(&mut self, user_prompt: impl Into<String>, reply: impl Into<String>) {
        self.replies.insert(user_prompt.into(), reply.into());
    }
}

impl ChatBackend for MockChat {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        self.replies
            .get(&req.user_prompt)
            .cloned()
            .ok_or(BackendError::Miss)
    }
}

/// FNV-1a; a stable hash for token bucketing.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Bag-of-tokens feature-hashing embedder. Texts sharing vocabulary get
/// high cosine similarity, which is enough structure for ranking fixtures.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbed {
    dimension: usize,
}

impl MockEmbed {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        MockEmbed { dimension }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dimension];
        let normalized = normalize_text(text);
        let mut any = false;
        for token in normalized.split_whitespace() {
            let bucket = (fnv1a(token.as_bytes()) % self.dimension as u64) as usize;
            v[bucket] += 1.0;
            any = true;
        }
        if !any {
            // Whitespace-only text still gets a deterministic direction.
            let bucket = (fnv1a(text.as_bytes()) % self.dimension as u64) as usize;
            v[bucket] = 1.0;
        }
        v
    }
}

impl Default for MockEmbed {
    fn default() -> Self {
        MockEmbed::new(64)
    }
}

impl EmbedBackend for MockEmbed {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Rule-based NLI:
/// entailment if the normalized hypothesis is a substring of the normalized
/// premise; contradiction if the premise contains "not " followed by the
/// hypothesis head; neutral otherwise.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockNli;

impl NliBackend for MockNli {
    fn classify(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict, BackendError> {
        let premise = normalize_text(premise);
        let hypothesis = normalize_text(hypothesis);
        let label = if !hypothesis.is_empty() && premise.contains(&hypothesis) {
            NliLabel::Entailment
        } else if contradicts(&premise, &hypothesis) {
            NliLabel::Contradiction
        } else {
            NliLabel::Neutral
        };
        Ok(NliVerdict {
            label,
            confidence: Some(1.0),
        })
    }
}

fn contradicts(premise: &str, hypothesis: &str) -> bool {
    let head: Vec<&str> = hypothesis.split_whitespace().take(2).collect();
    if head.is_empty() {
        return false;
    }
    premise.contains(&format!("not {}", head.join(" ")))
}

/// Search backend replaying recorded hit lists. Unmapped queries return no
/// hits, which downstream surfaces as a missing-evidence claim.
#[derive(Debug, Default, Clone)]
pub struct MockSearch {
    hits: BTreeMap<String, Vec<SearchHit>>,
}

impl MockSearch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, query: impl Into<String>, hits: Vec<SearchHit>) -> Self {
        self.hits.insert(query.into(), hits);
        self
    }

    pub fn insert(&mut self, query: impl Into<String>, hits: Vec<SearchHit>) {
        self.hits.insert(query.into(), hits);
    }
}

impl SearchBackend for MockSearch {
    fn search(&self, query: &str, _k: usize) -> Result<Vec<SearchHit>, BackendError> {
        Ok(self.hits.get(query).cloned().unwrap_or_default())
    }
}

/// Fetcher serving pages from a url → body mapping; unmapped urls 404.
#[derive(Debug, Default, Clone)]
pub struct MockFetcher {
    pages: BTreeMap<String, FetchedPage>,
}

impl MockFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_html(mut self, url: impl Into<String>, body: impl Into<String>) -> Self {
        self.pages.insert(
            url.into(),
            FetchedPage {
                content_type: Some("text/html".into()),
                body: body.into(),
            },
        );
        self
    }

    pub fn with_page(mut self, url: impl Into<String>, page: FetchedPage) -> Self {
        self.pages.insert(url.into(), page);
        self
    }

    pub fn insert_html(&mut self, url: impl Into<String>, body: impl Into<String>) {
        self.pages.insert(
            url.into(),
            FetchedPage {
                content_type: Some("text/html".into()),
                body: body.into(),
            },
        );
    }
}

impl PageFetcher for MockFetcher {
    fn fetch(&self, url: &str) -> Result<FetchedPage, BackendError> {
        self.pages
            .get(url)
            .cloned()
            .ok_or(BackendError::HttpStatus(404))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{chat_complete, embed};

    #[test]
    fn mock_chat_lookup_and_miss() {
        let chat = MockChat::new().with("P", "ok");
        let req = ChatRequest::new("mock", "P");
        assert_eq!(chat_complete(&chat, &req).unwrap(), "ok");
        let unmapped = ChatRequest::new("mock", "unknown");
        assert!(matches!(
            chat_complete(&chat, &unmapped),
            Err(BackendError::Miss)
        ));
    }

    #[test]
    fn mock_embed_is_deterministic_and_unit_norm() {
        let backend = MockEmbed::new(32);
        let texts = vec!["the sun rises".to_string(), "the sun rises".to_string()];
        let vectors = embed(&backend, &texts).unwrap();
        assert_eq!(vectors[0], vectors[1]);
        for v in &vectors {
            let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn mock_embed_similarity_tracks_shared_vocabulary() {
        let backend = MockEmbed::new(64);
        let texts = vec![
            "heat pumps reduce heating costs".to_string(),
            "heat pumps reduce heating costs significantly".to_string(),
            "quantum chromodynamics binds quarks".to_string(),
        ];
        let v = embed(&backend, &texts).unwrap();
        let dot = |a: &[f32], b: &[f32]| -> f32 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        assert!(dot(&v[0], &v[1]) > dot(&v[0], &v[2]));
    }

    #[test]
    fn mock_nli_rules() {
        let nli = MockNli;
        let sub = nli
            .classify("The report says the sun rises in the east today.", "The sun rises in the east.")
            .unwrap();
        assert_eq!(sub.label, NliLabel::Entailment);

        let contra = nli
            .classify("Experts agree it is not the sky that glows.", "the sky is luminous")
            .unwrap();
        assert_eq!(contra.label, NliLabel::Contradiction);

        let neutral = nli.classify("Bananas are yellow.", "Granite is igneous.").unwrap();
        assert_eq!(neutral.label, NliLabel::Neutral);
    }

    #[test]
    fn mock_search_replays_recorded_hits() {
        let hit = SearchHit::new("https://example.com/a", "A", "snippet", 1).unwrap();
        let search = MockSearch::new().with("Q", vec![hit.clone()]);
        assert_eq!(search.search("Q", 3).unwrap(), vec![hit]);
        assert!(search.search("other", 3).unwrap().is_empty());
    }

    #[test]
    fn mock_fetcher_404s_unknown_urls() {
        let fetcher = MockFetcher::new().with_html("https://example.com/a", "<p>Hi</p>");
        assert!(fetcher.fetch("https://example.com/a").is_ok());
        assert!(matches!(
            fetcher.fetch("https://example.com/b"),
            Err(BackendError::HttpStatus(404))
        ));
    }
}
