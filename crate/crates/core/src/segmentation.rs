//! Answer segmentation: rule-based sentence splitting, per-sentence prompt
//! segmentation, whole-answer direct segmentation, duplicate removal, and
//! descriptive statistics.

use crate::backends::{chat_complete, BackendError, ChatBackend, ChatRequest};
use crate::model::{Claim, ClaimOrigin, ModelError, QARecord};
use crate::par::Executor;
use crate::prompts;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("answer has zero sentences")]
    ZeroSentences,
}

/// One sentence of an answer, in answer order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
}

/// Table-style segmentation statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegStats {
    pub total_claims: usize,
    pub unique_claims: usize,
    pub avg_len_chars: f64,
    pub claims_per_sentence: f64,
}

/// A recoverable problem hit while segmenting one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationIssue {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_index: Option<usize>,
    pub message: String,
}

/// Claims plus whatever was skipped or malformed along the way.
#[derive(Debug, Clone, Default)]
pub struct SegmentationOutcome {
    pub claims: Vec<Claim>,
    pub issues: Vec<SegmentationIssue>,
    pub skipped_lines: usize,
}

// Tokens that end with a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "cf", "vs", "dr", "mr", "mrs", "ms", "prof", "fig", "st", "al", "approx",
    "dept", "jr", "sr", "inc", "ltd", "eq", "sec",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];

/// Splits an answer into ordered, non-overlapping sentences. Newlines are
/// hard boundaries; `.`/`!`/`?` end a sentence when followed by whitespace,
/// with guards for abbreviations, initials, list markers, and decimals.
/// Only inter-sentence whitespace is dropped, so joining the output
/// reconstructs the answer up to whitespace.
pub fn split_sentences(answer: &str) -> Vec<Sentence> {
    let chars: Vec<char> = answer.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;

    let push = |from: usize, to: usize, out: &mut Vec<Sentence>| {
        let text: String = chars[from..to].iter().collect();
        let trimmed = text.trim();
        if !trimmed.is_empty() {
            out.push(Sentence {
                text: trimmed.to_string(),
                index: out.len(),
            });
        }
    };

    let mut i = 0usize;
    while i < chars.len() {
        let ch = chars[i];
        if ch == '\n' {
            push(start, i, &mut sentences);
            start = i + 1;
            i += 1;
            continue;
        }
        if ch == '.' || ch == '!' || ch == '?' {
            let mut end = i + 1;
            while end < chars.len() && CLOSERS.contains(&chars[end]) {
                end += 1;
            }
            let followed_by_break = end >= chars.len() || chars[end].is_whitespace();
            if followed_by_break && (ch != '.' || period_ends_sentence(&chars, i, end)) {
                push(start, end, &mut sentences);
                start = end;
                i = end;
                continue;
            }
        }
        i += 1;
    }
    push(start, chars.len(), &mut sentences);
    sentences
}

fn period_ends_sentence(chars: &[char], dot: usize, after: usize) -> bool {
    // Token immediately before the period, including internal periods
    // so "e.g." resolves to "e.g".
    let mut begin = dot;
    while begin > 0 && (chars[begin - 1].is_alphanumeric() || chars[begin - 1] == '.') {
        begin -= 1;
    }
    let token: String = chars[begin..dot]
        .iter()
        .collect::<String>()
        .to_lowercase();

    if ABBREVIATIONS.contains(&token.as_str()) {
        return false;
    }
    if !token.is_empty() && token.chars().all(|c| c.is_ascii_digit()) {
        // A list marker like "1." at the start of a line is not an end.
        if begin == 0 || chars[begin - 1] == '\n' {
            return false;
        }
    }
    // An unknown abbreviation is likelier than a sentence starting lowercase.
    let next = chars[after..].iter().find(|c| !c.is_whitespace());
    if let Some(next) = next {
        if next.is_lowercase() {
            return false;
        }
    }
    true
}

/// A parsed numbered-list reply: `1. "text"` or `1. text`, one per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedList {
    pub items: Vec<String>,
    pub skipped_lines: usize,
}

/// Extracts numbered items from a model reply. Lines that do not match the
/// format are skipped and counted; empty items are never returned.
pub fn parse_numbered_list(reply: &str) -> ParsedList {
    let mut parsed = ParsedList::default();
    for line in reply.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match split_list_item(trimmed) {
            Some(item) if !item.is_empty() => parsed.items.push(item),
            _ => parsed.skipped_lines += 1,
        }
    }
    parsed
}

fn split_list_item(line: &str) -> Option<String> {
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    let mut item = rest.trim();
    if item.len() >= 2 && item.starts_with('"') && item.ends_with('"') {
        item = &item[1..item.len() - 1];
    }
    Some(item.trim().to_string())
}

/// One claim per sentence, in answer order.
pub fn segment_sentences(record: &QARecord) -> Result<Vec<Claim>, SegmentationError> {
    split_sentences(&record.answer)
        .into_iter()
        .map(|s| {
            Claim::new(
                format!("{}-n{:03}", record.id, s.index),
                &record.id,
                s.text,
                ClaimOrigin::Sentence,
                None,
            )
            .map_err(SegmentationError::from)
        })
        .collect()
}

/// Per-sentence prompt segmentation. Each sentence gets its own prompt
/// call (fanned out through `executor`, reassembled in sentence order); a
/// reply with zero parseable lines records an issue and contributes no
/// claims.
pub fn segment_factscore(
    record: &QARecord,
    chat: &dyn ChatBackend,
    model: &str,
    executor: &Executor,
) -> Result<SegmentationOutcome, SegmentationError> {
    let sentences = split_sentences(&record.answer);
    if sentences.is_empty() {
        return Ok(SegmentationOutcome::default());
    }

    let replies: Vec<Result<String, BackendError>> = executor.map_ordered(&sentences, |s| {
        let req = ChatRequest::new(model, prompts::render_sentence_facts(&s.text));
        chat_complete(chat, &req)
    });

    let mut outcome = SegmentationOutcome::default();
    for (sentence, reply) in sentences.iter().zip(replies) {
        let reply = reply?;
        let parsed = parse_numbered_list(&reply);
        outcome.skipped_lines += parsed.skipped_lines;
        if parsed.items.is_empty() {
            outcome.issues.push(SegmentationIssue {
                sentence_index: Some(sentence.index),
                message: "reply contained no parseable numbered facts".into(),
            });
            continue;
        }
        for (j, text) in parsed.items.into_iter().enumerate() {
            outcome.claims.push(Claim::new(
                format!("{}-s{:03}-f{:02}", record.id, sentence.index, j),
                &record.id,
                text,
                ClaimOrigin::PromptFactscore,
                None,
            )?);
        }
    }
    Ok(outcome)
}

/// Whole-answer segmentation with question context, one prompt call.
pub fn segment_direct(
    record: &QARecord,
    chat: &dyn ChatBackend,
    model: &str,
) -> Result<SegmentationOutcome, SegmentationError> {
    let req = ChatRequest::new(
        model,
        prompts::render_direct_segmentation(&record.question, &record.answer),
    );
    let reply = chat_complete(chat, &req)?;
    let parsed = parse_numbered_list(&reply);
    let mut outcome = SegmentationOutcome {
        skipped_lines: parsed.skipped_lines,
        ..Default::default()
    };
    if parsed.items.is_empty() {
        outcome.issues.push(SegmentationIssue {
            sentence_index: None,
            message: "direct segmentation reply contained no parseable numbered claims".into(),
        });
        return Ok(outcome);
    }
    for (j, text) in parsed.items.into_iter().enumerate() {
        outcome.claims.push(Claim::new(
            format!("{}-d{:03}", record.id, j),
            &record.id,
            text,
            ClaimOrigin::DirectWithContext,
            None,
        )?);
    }
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct DedupeOutcome {
    pub claims: Vec<Claim>,
    pub duplicates_removed: usize,
}

/// Keeps the first occurrence per fingerprint, preserving order.
pub fn dedupe_claims(claims: Vec<Claim>) -> DedupeOutcome {
    let mut seen = BTreeSet::new();
    let mut kept = Vec::with_capacity(claims.len());
    let mut duplicates_removed = 0;
    for claim in claims {
        if seen.insert(claim.fingerprint) {
            kept.push(claim);
        } else {
            duplicates_removed += 1;
        }
    }
    DedupeOutcome {
        claims: kept,
        duplicates_removed,
    }
}

/// The four table statistics for one answer's claims (pre-dedup lengths).
pub fn segmentation_stats(claims: &[Claim], answer: &str) -> Result<SegStats, SegmentationError> {
    stats_with_sentence_count(claims, split_sentences(answer).len())
}

/// Same statistics computed against an explicit sentence count, for
/// corpus-level aggregation.
pub fn stats_with_sentence_count(
    claims: &[Claim],
    sentence_count: usize,
) -> Result<SegStats, SegmentationError> {
    if sentence_count == 0 {
        return Err(SegmentationError::ZeroSentences);
    }
    let total_claims = claims.len();
    let unique_claims = claims
        .iter()
        .map(|c| c.fingerprint)
        .collect::<BTreeSet<_>>()
        .len();
    let avg_len_chars = if total_claims == 0 {
        0.0
    } else {
        claims
            .iter()
            .map(|c| c.text.chars().count() as f64)
            .sum::<f64>()
            / total_claims as f64
    };
    Ok(SegStats {
        total_claims,
        unique_claims,
        avg_len_chars,
        claims_per_sentence: total_claims as f64 / sentence_count as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::MockChat;
    use proptest::prelude::*;

    fn texts(sentences: &[Sentence]) -> Vec<&str> {
        sentences.iter().map(|s| s.text.as_str()).collect()
    }

    #[test]
    fn empty_answer_has_no_sentences() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   \n\t ").is_empty());
    }

    #[test]
    fn two_terminal_sentences() {
        let s = split_sentences("A is B. C is D.");
        assert_eq!(texts(&s), vec!["A is B.", "C is D."]);
        assert_eq!(s[1].index, 1);
    }

    #[test]
    fn question_and_exclamation_terminals() {
        let s = split_sentences("Is it real? Yes! Certainly.");
        assert_eq!(texts(&s), vec!["Is it real?", "Yes!", "Certainly."]);
    }

    #[test]
    fn abbreviations_do_not_split() {
        let s = split_sentences("We use tools, e.g. hammers, daily. Dr. Smith agrees.");
        assert_eq!(
            texts(&s),
            vec!["We use tools, e.g. hammers, daily.", "Dr. Smith agrees."]
        );
    }

    #[test]
    fn decimals_and_list_markers_do_not_split() {
        let s = split_sentences("Pi is roughly 3.14. It is irrational.");
        assert_eq!(texts(&s), vec!["Pi is roughly 3.14.", "It is irrational."]);

        let s = split_sentences("Steps:\n1. Run tests.\n2. Ship it.");
        assert_eq!(texts(&s), vec!["Steps:", "1. Run tests.", "2. Ship it."]);
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        let s = split_sentences("He said \"Stop.\" Then he left.");
        assert_eq!(texts(&s), vec!["He said \"Stop.\"", "Then he left."]);
    }

    #[test]
    fn parse_numbered_list_accepts_both_forms() {
        let parsed = parse_numbered_list("1. \"F1\"\n2. F2\n3) F3");
        assert_eq!(parsed.items, vec!["F1", "F2", "F3"]);
        assert_eq!(parsed.skipped_lines, 0);
    }

    #[test]
    fn parse_numbered_list_skips_commentary_and_empties() {
        let reply = "Here are the facts:\n1. \"A\"\n2. \"\"\nThat is all.";
        let parsed = parse_numbered_list(reply);
        assert_eq!(parsed.items, vec!["A"]);
        assert_eq!(parsed.skipped_lines, 3);
    }

    #[test]
    fn factscore_parses_mock_reply_per_sentence() {
        let record = QARecord::new("r1", "Q?", "First point. Second point.").unwrap();
        let chat = MockChat::new()
            .with(
                prompts::render_sentence_facts("First point."),
                "1. \"F1\"\n2. \"F2\"",
            )
            .with(prompts::render_sentence_facts("Second point."), "1. F3");
        let outcome =
            segment_factscore(&record, &chat, "mock", &Executor::sequential()).unwrap();
        let texts: Vec<&str> = outcome.claims.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["F1", "F2", "F3"]);
        assert!(outcome.issues.is_empty());
        assert!(outcome
            .claims
            .iter()
            .all(|c| c.origin == ClaimOrigin::PromptFactscore));
    }

    #[test]
    fn factscore_sentence_can_surface_as_its_own_atomic_fact() {
        let answer = "Seeking a second opinion helps with difficult diagnoses.";
        let record = QARecord::new("r1", "Q?", answer).unwrap();
        let chat = MockChat::new().with(
            prompts::render_sentence_facts(answer),
            "1. \"Seeking a second opinion helps\"\n2. \"Difficult diagnoses benefit from more reviewers\"",
        );
        let outcome =
            segment_factscore(&record, &chat, "mock", &Executor::sequential()).unwrap();
        assert_eq!(outcome.claims[0].text, "Seeking a second opinion helps");
    }

    #[test]
    fn direct_segmentation_parses_the_template_example_shape() {
        let question =
            "As an officer with the NYPD, I am being attacked by hooligans. What charges can be pressed?";
        let answer = "If you're an NYPD officer and you're being assaulted by hooligans, you \
                      have the right to press charges.";
        let record = QARecord::new("r1", question, answer).unwrap();
        let reply = "\
1. An NYPD officer assaulted by hooligans has the right to press charges for assault on a police officer.
2. Assault on a police officer is deemed a criminal offense in New York.
3. The act of assaulting a police officer is specified under New York Penal Law \u{a7} 120.08.
4. Under New York law, assaulting a police officer is categorized as a felony.
5. Conviction for assaulting a police officer in New York may result in imprisonment.
6. Conviction for assaulting a police officer in New York may lead to monetary fines.";
        let chat = MockChat::new()
            .with(prompts::render_direct_segmentation(question, answer), reply);
        let outcome = segment_direct(&record, &chat, "mock").unwrap();
        assert_eq!(outcome.claims.len(), 6);
        assert_eq!(
            outcome.claims[0].text,
            "An NYPD officer assaulted by hooligans has the right to press charges for assault on a police officer."
        );
    }

    #[test]
    fn factscore_records_malformed_reply_and_continues() {
        let record = QARecord::new("r1", "Q?", "Good one. Bad one.").unwrap();
        let chat = MockChat::new()
            .with(prompts::render_sentence_facts("Good one."), "1. A fact")
            .with(prompts::render_sentence_facts("Bad one."), "no list here");
        let outcome =
            segment_factscore(&record, &chat, "mock", &Executor::sequential()).unwrap();
        assert_eq!(outcome.claims.len(), 1);
        assert_eq!(outcome.issues.len(), 1);
        assert_eq!(outcome.issues[0].sentence_index, Some(1));
    }

    #[test]
    fn factscore_zero_sentences_makes_zero_calls() {
        let mut record = QARecord::new("r1", "Q?", "placeholder").unwrap();
        record.answer = "   ".into();
        let chat = MockChat::new(); // any call would be a Miss
        let outcome =
            segment_factscore(&record, &chat, "mock", &Executor::sequential()).unwrap();
        assert!(outcome.claims.is_empty());
    }

    #[test]
    fn direct_segmentation_keeps_listed_order() {
        let record = QARecord::new("r1", "Q?", "Some answer.").unwrap();
        let prompt = prompts::render_direct_segmentation("Q?", "Some answer.");
        let chat = MockChat::new().with(prompt, "1. One.\n2. Two.\n3. Three.");
        let outcome = segment_direct(&record, &chat, "mock").unwrap();
        let texts: Vec<&str> = outcome.claims.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["One.", "Two.", "Three."]);
        assert!(outcome
            .claims
            .iter()
            .all(|c| c.origin == ClaimOrigin::DirectWithContext));
    }

    #[test]
    fn direct_segmentation_ignores_trailing_commentary() {
        let record = QARecord::new("r1", "Q?", "Some answer.").unwrap();
        let prompt = prompts::render_direct_segmentation("Q?", "Some answer.");
        let chat = MockChat::new().with(
            prompt,
            "1. Kept claim.\n2. Also kept.\n\nNote: these claims were extracted faithfully.",
        );
        let outcome = segment_direct(&record, &chat, "mock").unwrap();
        assert_eq!(outcome.claims.len(), 2);
        assert_eq!(outcome.skipped_lines, 1);
    }

    #[test]
    fn dedupe_keeps_first_and_counts() {
        let record_id = "r1";
        let mk = |id: &str, text: &str| {
            Claim::new(id, record_id, text, ClaimOrigin::Sentence, None).unwrap()
        };
        let out = dedupe_claims(vec![
            mk("c1", "The sun."),
            mk("c2", "the  sun"),
            mk("c3", "Another."),
        ]);
        assert_eq!(out.claims.len(), 2);
        assert_eq!(out.duplicates_removed, 1);
        assert_eq!(out.claims[0].id, "c1");

        // Idempotent.
        let again = dedupe_claims(out.claims.clone());
        assert_eq!(again.claims, out.claims);
        assert_eq!(again.duplicates_removed, 0);
    }

    #[test]
    fn stats_arithmetic() {
        let mk = |id: &str, text: &str| {
            Claim::new(id, "r1", text, ClaimOrigin::Sentence, None).unwrap()
        };
        let claims = vec![mk("c1", "aaaaaaaaaa"), mk("c2", "bbbbbbbbbbbbbbbbbbbb")];
        let stats = segmentation_stats(&claims, "One sentence. Two sentences.").unwrap();
        assert_eq!(stats.total_claims, 2);
        assert_eq!(stats.unique_claims, 2);
        assert!((stats.avg_len_chars - 15.0).abs() < 1e-12);
        assert!((stats.claims_per_sentence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stats_empty_claims_are_zero() {
        let stats = segmentation_stats(&[], "One sentence.").unwrap();
        assert_eq!(stats.total_claims, 0);
        assert_eq!(stats.unique_claims, 0);
        assert_eq!(stats.avg_len_chars, 0.0);
        assert_eq!(stats.claims_per_sentence, 0.0);
    }

    #[test]
    fn stats_zero_sentences_errors() {
        assert!(matches!(
            segmentation_stats(&[], ""),
            Err(SegmentationError::ZeroSentences)
        ));
    }

    #[test]
    fn sentence_claims_match_split_output() {
        let record = QARecord::new("r1", "Q?", "A is B. C is D.").unwrap();
        let claims = segment_sentences(&record).unwrap();
        let sentences = split_sentences(&record.answer);
        assert_eq!(claims.len(), sentences.len());
        for (claim, sentence) in claims.iter().zip(&sentences) {
            assert_eq!(claim.text, sentence.text);
            assert_eq!(claim.origin, ClaimOrigin::Sentence);
        }
    }

    proptest! {
        #[test]
        fn split_is_lossless_modulo_whitespace(answer in "[ a-zA-Z0-9.!?\"\n]{0,200}") {
            let sentences = split_sentences(&answer);
            let joined = sentences
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            prop_assert_eq!(
                crate::model::normalize_text(&joined),
                crate::model::normalize_text(&answer)
            );
        }

        #[test]
        fn split_never_emits_empty_sentences(answer in ".{0,200}") {
            for s in split_sentences(&answer) {
                prop_assert!(!s.text.trim().is_empty());
            }
        }

        #[test]
        fn parser_never_returns_empty_items(reply in ".{0,200}") {
            for item in parse_numbered_list(&reply).items {
                prop_assert!(!item.is_empty());
            }
        }
    }
}
