//! HTTP backends against a minimal local server, covering the wire
//! formats end to end: request shape out, response parsing back.

use attributor_core::backends::http::{
    HttpChatBackend, HttpEmbedBackend, HttpFetcher, HttpNliBackend, HttpSearchBackend, RetryPolicy,
};
use attributor_core::backends::{
    chat_complete, embed, nli_classify, web_search, ChatRequest, NliLabel, PageFetcher,
};
use std::io::{Read, Write};
use std::net::TcpListener;
use std::time::Duration;

/// One-shot HTTP server: answers `hits` requests with canned bodies and
/// returns the raw requests it saw.
fn serve(
    responses: Vec<(&'static str, String)>,
) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for (content_type, body) in responses {
            let (mut stream, _) = listener.accept().expect("accept");
            let mut buf = vec![0u8; 65536];
            let mut request = Vec::new();
            // Read until the end of headers, then any advertised body.
            loop {
                let n = stream.read(&mut buf).expect("read");
                request.extend_from_slice(&buf[..n]);
                if let Some(headers_end) = find(&request, b"\r\n\r\n") {
                    let headers = String::from_utf8_lossy(&request[..headers_end]).to_string();
                    let content_length = headers
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(str::trim).map(String::from))
                        .and_then(|v| v.parse::<usize>().ok())
                        .unwrap_or(0);
                    if request.len() >= headers_end + 4 + content_length {
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            seen.push(String::from_utf8_lossy(&request).to_string());
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: {content_type}\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).expect("write");
        }
        seen
    });
    (format!("http://{addr}"), handle)
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|w| w == needle)
}

#[test]
fn chat_backend_speaks_chat_completions() {
    let body = r#"{"choices":[{"message":{"role":"assistant","content":"the reply"}}]}"#;
    let (base, handle) = serve(vec![("application/json", body.to_string())]);
    let backend = HttpChatBackend::new(
        &base,
        Some("test-key".into()),
        Duration::from_secs(5),
        RetryPolicy::none(),
    )
    .unwrap();
    let mut req = ChatRequest::new("gpt-test", "hello");
    req.system_prompt = "be brief".into();
    let reply = chat_complete(&backend, &req).unwrap();
    assert_eq!(reply, "the reply");

    let seen = handle.join().unwrap();
    assert!(seen[0].starts_with("POST /chat/completions"));
    assert!(seen[0].contains("authorization: Bearer test-key")
        || seen[0].contains("Authorization: Bearer test-key"));
    let body_start = seen[0].find("\r\n\r\n").unwrap() + 4;
    let sent: serde_json::Value = serde_json::from_str(&seen[0][body_start..]).unwrap();
    assert_eq!(sent["model"], "gpt-test");
    assert_eq!(sent["messages"][0]["role"], "system");
    assert_eq!(sent["messages"][1]["content"], "hello");
    assert_eq!(sent["temperature"], 0.0);
}

#[test]
fn embed_backend_speaks_embeddings_and_normalizes() {
    let body = r#"{"data":[{"index":0,"embedding":[3.0,4.0]},{"index":1,"embedding":[0.0,2.0]}]}"#;
    let (base, handle) = serve(vec![("application/json", body.to_string())]);
    let backend = HttpEmbedBackend::new(
        &base,
        "embed-test",
        None,
        Duration::from_secs(5),
        RetryPolicy::none(),
    )
    .unwrap();
    let vectors = embed(&backend, &["a".into(), "b".into()]).unwrap();
    assert_eq!(vectors[0], vec![0.6, 0.8]);
    assert_eq!(vectors[1], vec![0.0, 1.0]);

    let seen = handle.join().unwrap();
    assert!(seen[0].starts_with("POST /embeddings"));
    let body_start = seen[0].find("\r\n\r\n").unwrap() + 4;
    let sent: serde_json::Value = serde_json::from_str(&seen[0][body_start..]).unwrap();
    assert_eq!(sent["model"], "embed-test");
    assert_eq!(sent["input"], serde_json::json!(["a", "b"]));
}

#[test]
fn nli_backend_posts_premise_hypothesis() {
    let body = r#"{"label":"contradiction","confidence":0.88}"#;
    let (base, handle) = serve(vec![("application/json", body.to_string())]);
    let backend =
        HttpNliBackend::new(&base, None, Duration::from_secs(5), RetryPolicy::none()).unwrap();
    let verdict = nli_classify(&backend, "the premise", "the hypothesis").unwrap();
    assert_eq!(verdict.label, NliLabel::Contradiction);
    assert_eq!(verdict.confidence, Some(0.88));

    let seen = handle.join().unwrap();
    let body_start = seen[0].find("\r\n\r\n").unwrap() + 4;
    let sent: serde_json::Value = serde_json::from_str(&seen[0][body_start..]).unwrap();
    assert_eq!(sent["premise"], "the premise");
    assert_eq!(sent["hypothesis"], "the hypothesis");
}

#[test]
fn search_backend_sends_q_and_num() {
    let body = r#"{"items":[
        {"link":"https://example.com/a","title":"A","snippet":"sa"},
        {"link":"https://example.com/b","title":"B","snippet":"sb"},
        {"link":"https://example.com/c","title":"C","snippet":"sc"},
        {"link":"https://example.com/d","title":"D","snippet":"sd"}
    ]}"#;
    let (base, handle) = serve(vec![("application/json", body.to_string())]);
    let backend =
        HttpSearchBackend::new(&base, None, Duration::from_secs(5), RetryPolicy::none()).unwrap();
    let hits = web_search(&backend, "heat pumps", 3).unwrap();
    assert_eq!(hits.len(), 3);
    assert_eq!(hits[0].url, "https://example.com/a");
    assert_eq!(hits[2].rank, 3);

    let seen = handle.join().unwrap();
    assert!(seen[0].contains("q=heat%20pumps") || seen[0].contains("q=heat+pumps"));
    assert!(seen[0].contains("num=3"));
}

#[test]
fn fetcher_caps_body_and_reports_content_type() {
    let big_body = format!("<p>{}</p>", "x".repeat(64 * 1024));
    let (base, _handle) = serve(vec![("text/html; charset=utf-8", big_body)]);
    let fetcher = HttpFetcher::new(Duration::from_secs(5), 1024).unwrap();
    let page = fetcher.fetch(&base).unwrap();
    assert!(page.body.len() <= 1024);
    assert!(page
        .content_type
        .as_deref()
        .unwrap()
        .starts_with("text/html"));
}
