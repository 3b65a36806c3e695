//! HTTP implementations of the backend contracts.
//!
//! Chat and embedding speak the de-facto `/v1/chat/completions` and
//! `/v1/embeddings` wire formats; NLI is a plain `{premise, hypothesis}`
//! POST; search is a GET with `q`/`num` returning Google Custom
//! Search-shaped items. Request building and response parsing are split
//! out so the wire formats are testable without sockets.

use super::{
    BackendError, ChatBackend, ChatRequest, EmbedBackend, FetchedPage, NliBackend, NliLabel,
    NliVerdict, PageFetcher, SearchBackend, SearchHit,
};
use serde::Deserialize;
use std::io::Read;
use std::time::Duration;

pub const USER_AGENT: &str = concat!("attributor/", env!("CARGO_PKG_VERSION"));

/// Bounded retries with exponential backoff, transport errors only.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            base_delay: Duration::ZERO,
        }
    }

    fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let mut attempt = 0;
        loop {
            match call() {
                Err(e) if e.is_transport() && attempt < self.max_retries => {
                    std::thread::sleep(self.base_delay * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

fn map_transport(backend: &str, err: reqwest::Error) -> BackendError {
    if err.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Unreachable {
            backend: backend.to_string(),
            detail: err.to_string(),
        }
    }
}

fn check_status(status: reqwest::StatusCode) -> Result<(), BackendError> {
    if status == reqwest::StatusCode::TOO_MANY_REQUESTS {
        return Err(BackendError::QuotaExceeded);
    }
    if !status.is_success() {
        return Err(BackendError::HttpStatus(status.as_u16()));
    }
    Ok(())
}

fn build_client(timeout: Duration) -> Result<reqwest::blocking::Client, BackendError> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .user_agent(USER_AGENT)
        .build()
        .map_err(|e| BackendError::Unreachable {
            backend: "http".into(),
            detail: format!("client build failed: {e}"),
        })
}

fn bearer(
    req: reqwest::blocking::RequestBuilder,
    api_key: &Option<String>,
) -> reqwest::blocking::RequestBuilder {
    match api_key {
        Some(key) => req.bearer_auth(key),
        None => req,
    }
}

pub fn chat_request_body(req: &ChatRequest) -> serde_json::Value {
    let mut messages = Vec::new();
    if !req.system_prompt.is_empty() {
        messages.push(serde_json::json!({"role": "system", "content": req.system_prompt}));
    }
    messages.push(serde_json::json!({"role": "user", "content": req.user_prompt}));
    let mut body = serde_json::json!({
        "model": req.backend_id,
        "messages": messages,
        "temperature": req.temperature,
    });
    if let Some(max) = req.max_output {
        body["max_tokens"] = serde_json::json!(max);
    }
    body
}

pub fn parse_chat_response(body: &[u8]) -> Result<String, BackendError> {
    #[derive(Deserialize)]
    struct Choice {
        message: Message,
    }
    #[derive(Deserialize)]
    struct Message {
        content: String,
    }
    #[derive(Deserialize)]
    struct Response {
        choices: Vec<Choice>,
    }
    let parsed: Response = serde_json::from_slice(body)
        .map_err(|e| BackendError::InvalidResponse(format!("chat response: {e}")))?;
    parsed
        .choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| BackendError::InvalidResponse("chat response has no choices".into()))
}

pub fn parse_embed_response(body: &[u8], expected: usize) -> Result<Vec<Vec<f32>>, BackendError> {
    #[derive(Deserialize)]
    struct Item {
        index: usize,
        embedding: Vec<f32>,
    }
    #[derive(Deserialize)]
    struct Response {
        data: Vec<Item>,
    }
    let parsed: Response = serde_json::from_slice(body)
        .map_err(|e| BackendError::InvalidResponse(format!("embedding response: {e}")))?;
    if parsed.data.len() != expected {
        return Err(BackendError::InvalidResponse(format!(
            "expected {expected} embeddings, got {}",
            parsed.data.len()
        )));
    }
    let mut items = parsed.data;
    items.sort_by_key(|i| i.index);
    Ok(items.into_iter().map(|i| i.embedding).collect())
}

pub fn parse_nli_response(body: &[u8]) -> Result<NliVerdict, BackendError> {
    #[derive(Deserialize)]
    struct Response {
        label: String,
        #[serde(default)]
        confidence: Option<f32>,
    }
    let parsed: Response = serde_json::from_slice(body)
        .map_err(|e| BackendError::InvalidResponse(format!("nli response: {e}")))?;
    let label = match parsed.label.trim().to_ascii_lowercase().as_str() {
        "entailment" => NliLabel::Entailment,
        "contradiction" => NliLabel::Contradiction,
        "neutral" => NliLabel::Neutral,
        other => {
            return Err(BackendError::InvalidResponse(format!(
                "unknown nli label {other:?}"
            )))
        }
    };
    Ok(NliVerdict {
        label,
        confidence: parsed.confidence,
    })
}

pub fn parse_search_response(body: &[u8]) -> Result<Vec<SearchHit>, BackendError> {
    #[derive(Deserialize)]
    struct Item {
        link: String,
        #[serde(default)]
        title: String,
        #[serde(default)]
        snippet: String,
    }
    #[derive(Deserialize)]
    struct Response {
        #[serde(default)]
        items: Vec<Item>,
    }
    let parsed: Response = serde_json::from_slice(body)
        .map_err(|e| BackendError::InvalidResponse(format!("search response: {e}")))?;
    parsed
        .items
        .into_iter()
        .enumerate()
        .map(|(i, item)| SearchHit::new(item.link, item.title, item.snippet, i + 1))
        .collect()
}

pub struct HttpChatBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpChatBackend {
    /// `base_url` is the API root; `/chat/completions` is appended.
    pub fn new(
        base_url: &str,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self, BackendError> {
        Ok(HttpChatBackend {
            client: build_client(timeout)?,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            retry,
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat_complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let body = chat_request_body(req);
        self.retry.run(|| {
            let response = bearer(self.client.post(&self.endpoint), &self.api_key)
                .json(&body)
                .send()
                .map_err(|e| map_transport("chat", e))?;
            check_status(response.status())?;
            let bytes = response.bytes().map_err(|e| map_transport("chat", e))?;
            parse_chat_response(&bytes)
        })
    }
}

pub struct HttpEmbedBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpEmbedBackend {
    pub fn new(
        base_url: &str,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self, BackendError> {
        Ok(HttpEmbedBackend {
            client: build_client(timeout)?,
            endpoint: format!("{}/embeddings", base_url.trim_end_matches('/')),
            model: model.into(),
            api_key,
            retry,
        })
    }
}

impl EmbedBackend for HttpEmbedBackend {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        let body = serde_json::json!({"model": self.model, "input": texts});
        self.retry.run(|| {
            let response = bearer(self.client.post(&self.endpoint), &self.api_key)
                .json(&body)
                .send()
                .map_err(|e| map_transport("embed", e))?;
            check_status(response.status())?;
            let bytes = response.bytes().map_err(|e| map_transport("embed", e))?;
            parse_embed_response(&bytes, texts.len())
        })
    }
}

pub struct HttpNliBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpNliBackend {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self, BackendError> {
        Ok(HttpNliBackend {
            client: build_client(timeout)?,
            endpoint: endpoint.into(),
            api_key,
            retry,
        })
    }
}

impl NliBackend for HttpNliBackend {
    fn classify(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict, BackendError> {
        let body = serde_json::json!({"premise": premise, "hypothesis": hypothesis});
        self.retry.run(|| {
            let response = bearer(self.client.post(&self.endpoint), &self.api_key)
                .json(&body)
                .send()
                .map_err(|e| map_transport("nli", e))?;
            check_status(response.status())?;
            let bytes = response.bytes().map_err(|e| map_transport("nli", e))?;
            parse_nli_response(&bytes)
        })
    }
}

pub struct HttpSearchBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpSearchBackend {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self, BackendError> {
        Ok(HttpSearchBackend {
            client: build_client(timeout)?,
            endpoint: endpoint.into(),
            api_key,
            retry,
        })
    }
}

impl SearchBackend for HttpSearchBackend {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, BackendError> {
        self.retry.run(|| {
            let response = bearer(
                self.client
                    .get(&self.endpoint)
                    .query(&[("q", query), ("num", &k.to_string())]),
                &self.api_key,
            )
            .send()
            .map_err(|e| map_transport("search", e))?;
            check_status(response.status())?;
            let bytes = response.bytes().map_err(|e| map_transport("search", e))?;
            parse_search_response(&bytes)
        })
    }
}

/// Plain page fetcher with a redirect cap, download cap, and static UA.
pub struct HttpFetcher {
    client: reqwest::blocking::Client,
    max_bytes: usize,
}

impl HttpFetcher {
    pub fn new(timeout: Duration, max_bytes: usize) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(USER_AGENT)
            .redirect(reqwest::redirect::Policy::limited(5))
            .build()
            .map_err(|e| BackendError::Unreachable {
                backend: "fetch".into(),
                detail: format!("client build failed: {e}"),
            })?;
        Ok(HttpFetcher { client, max_bytes })
    }
}

impl PageFetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<FetchedPage, BackendError> {
        let response = self
            .client
            .get(url)
            .send()
            .map_err(|e| map_transport("fetch", e))?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::HttpStatus(status.as_u16()));
        }
        let content_type = response
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let mut body = Vec::new();
        response
            .take(self.max_bytes as u64)
            .read_to_end(&mut body)
            .map_err(|e| BackendError::Unreachable {
                backend: "fetch".into(),
                detail: format!("body read failed: {e}"),
            })?;
        Ok(FetchedPage {
            content_type,
            body: String::from_utf8_lossy(&body).into_owned(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_body_carries_messages_and_temperature() {
        let mut req = ChatRequest::new("gpt-x", "hello");
        req.system_prompt = "be terse".into();
        req.max_output = Some(128);
        let body = chat_request_body(&req);
        assert_eq!(body["model"], "gpt-x");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 128);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hello");
    }

    #[test]
    fn chat_response_takes_first_choice() {
        let body = br#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(parse_chat_response(body).unwrap(), "hi");
        assert!(parse_chat_response(br#"{"choices":[]}"#).is_err());
        assert!(parse_chat_response(b"not json").is_err());
    }

    #[test]
    fn embed_response_reorders_by_index() {
        let body = br#"{"data":[
            {"index":1,"embedding":[0.0,1.0]},
            {"index":0,"embedding":[1.0,0.0]}
        ]}"#;
        let vectors = parse_embed_response(body, 2).unwrap();
        assert_eq!(vectors[0], vec![1.0, 0.0]);
        assert_eq!(vectors[1], vec![0.0, 1.0]);
        assert!(parse_embed_response(body, 3).is_err());
    }

    #[test]
    fn nli_response_maps_labels() {
        let verdict = parse_nli_response(br#"{"label":"Entailment","confidence":0.93}"#).unwrap();
        assert_eq!(verdict.label, NliLabel::Entailment);
        assert_eq!(verdict.confidence, Some(0.93));
        assert!(parse_nli_response(br#"{"label":"maybe"}"#).is_err());
    }

    #[test]
    fn search_response_uses_cse_field_names() {
        let body = br#"{"items":[
            {"link":"https://example.com/a","title":"A","snippet":"sa"},
            {"link":"https://example.com/b","title":"B","snippet":"sb"}
        ]}"#;
        let hits = parse_search_response(body).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].rank, 1);
        assert_eq!(hits[1].url, "https://example.com/b");
        assert!(parse_search_response(br#"{}"#).unwrap().is_empty());
    }

    #[test]
    fn retry_only_on_transport_errors() {
        let policy = RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(1),
        };
        let mut attempts = 0;
        let result: Result<(), BackendError> = policy.run(|| {
            attempts += 1;
            Err(BackendError::Timeout)
        });
        assert!(result.is_err());
        assert_eq!(attempts, 3);

        let mut attempts = 0;
        let result: Result<(), BackendError> = policy.run(|| {
            attempts += 1;
            Err(BackendError::HttpStatus(400))
        });
        assert!(result.is_err());
        assert_eq!(attempts, 1);
    }
}
