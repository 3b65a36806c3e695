//! Visible-text extraction from HTML.
//!
//! Deliberately small: tags are stripped, the content of
//! script/style/noscript/nav/header/footer is dropped, block elements
//! become newline separators, a handful of entities are decoded, and
//! whitespace is normalized line by line.

const SKIP_CONTENT: &[&str] = &["script", "style", "noscript", "nav", "header", "footer"];

const BLOCK: &[&str] = &[
    "p", "div", "br", "li", "ul", "ol", "h1", "h2", "h3", "h4", "h5", "h6", "tr", "table",
    "thead", "tbody", "section", "article", "aside", "main", "blockquote", "pre", "hr", "dt",
    "dd", "figure", "figcaption", "title",
];

pub fn extract_text(html: &str) -> String {
    let bytes = html.as_bytes();
    let mut out = String::new();
    let mut i = 0;

    while i < bytes.len() {
        if bytes[i] != b'<' {
            let start = i;
            while i < bytes.len() && bytes[i] != b'<' {
                i += 1;
            }
            decode_entities(&html[start..i], &mut out);
            continue;
        }
        if html[i..].starts_with("<!--") {
            i = match html[i..].find("-->") {
                Some(end) => i + end + 3,
                None => bytes.len(),
            };
            continue;
        }
        let tag_end = match html[i..].find('>').map(|p| i + p) {
            Some(p) => p,
            None => break, // unterminated tag, drop the tail
        };
        let inner = &html[i + 1..tag_end];
        let name = tag_name(inner);
        let closing = inner.starts_with('/');

        if !closing && SKIP_CONTENT.contains(&name.as_str()) {
            let close = format!("</{name}");
            i = match find_ascii_ci(&html[tag_end..], &close) {
                Some(rel) => {
                    let after = tag_end + rel;
                    match html[after..].find('>') {
                        Some(p) => after + p + 1,
                        None => bytes.len(),
                    }
                }
                None => bytes.len(),
            };
            out.push('\n');
            continue;
        }
        if BLOCK.contains(&name.as_str()) {
            out.push('\n');
        }
        i = tag_end + 1;
    }

    normalize_lines(&out)
}

/// Byte-offset case-insensitive search for an ASCII needle.
fn find_ascii_ci(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.is_empty() || h.len() < n.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

fn tag_name(inner: &str) -> String {
    inner
        .trim_start_matches('/')
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_lowercase()
}

fn decode_entities(text: &str, out: &mut String) {
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let semi = tail.find(';').filter(|&p| p <= 8);
        match semi {
            Some(p) => {
                let entity = &tail[1..p];
                match decode_entity(entity) {
                    Some(ch) => out.push(ch),
                    None => out.push_str(&tail[..=p]),
                }
                rest = &tail[p + 1..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
}

fn decode_entity(entity: &str) -> Option<char> {
    match entity {
        "amp" => Some('&'),
        "lt" => Some('<'),
        "gt" => Some('>'),
        "quot" => Some('"'),
        "apos" => Some('\''),
        "nbsp" => Some(' '),
        _ => {
            let code = entity.strip_prefix('#')?;
            let value = match code.strip_prefix(['x', 'X']) {
                Some(hex) => u32::from_str_radix(hex, 16).ok()?,
                None => code.parse().ok()?,
            };
            char::from_u32(value)
        }
    }
}

fn normalize_lines(raw: &str) -> String {
    let mut lines = Vec::new();
    for line in raw.lines() {
        let collapsed = line.split_whitespace().collect::<Vec<_>>().join(" ");
        if !collapsed.is_empty() {
            lines.push(collapsed);
        }
    }
    lines.join("\n")
}
