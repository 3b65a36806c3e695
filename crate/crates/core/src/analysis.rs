//! Claim analysis: check-worthiness classification, independence detection,
//! contextual enrichment of non-independent claims, and the enrichment
//! effect summary.

use crate::backends::{chat_complete, BackendError, ChatBackend, ChatRequest};
use crate::model::{Claim, ClaimOrigin, Independence, ModelError, RelevanceClass};
use crate::prompts;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unparseable verdict after retry: {0:?}")]
    UnparseableVerdict(String),
    #[error("claim {0} is not labeled not_independent")]
    NotEnrichable(String),
    #[error("claim {0} is already enriched")]
    AlreadyEnriched(String),
    #[error("empty input")]
    EmptyInput,
}

/// Relevance class plus whether the fallback class was forced by a parse
/// failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifyOutcome {
    pub relevance: RelevanceClass,
    pub parse_error: bool,
}

/// Lineage record of one enrichment attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentOutcome {
    pub original_claim_id: String,
    pub enriched_claim_id: String,
    pub resolved: bool,
    pub before_len: usize,
    pub after_len: usize,
}

/// Aggregate effect of a batch of enrichment attempts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentEffect {
    pub total: usize,
    pub resolved: usize,
    pub resolution_rate: f64,
    pub mean_before_len: f64,
    pub mean_after_len: f64,
}

fn strip_reply(reply: &str) -> &str {
    reply
        .trim()
        .trim_matches(|c| matches!(c, '"' | '\'' | '`'))
        .trim()
        .trim_end_matches('.')
        .trim()
}

/// Classifies one claim into the four check-worthiness classes. A reply
/// that is not a bare integer 1-4 is retried once; a second failure falls
/// back to `other` with `parse_error` set.
pub fn classify_checkworthiness(
    claim: &Claim,
    chat: &dyn ChatBackend,
    model: &str,
) -> Result<ClassifyOutcome, AnalysisError> {
    let req = ChatRequest::new(model, prompts::render_checkworthiness(&claim.text));
    for _ in 0..2 {
        let reply = chat_complete(chat, &req)?;
        if let Some(class) = strip_reply(&reply)
            .parse::<u8>()
            .ok()
            .and_then(RelevanceClass::from_code)
        {
            return Ok(ClassifyOutcome {
                relevance: class,
                parse_error: false,
            });
        }
    }
    Ok(ClassifyOutcome {
        relevance: RelevanceClass::Other,
        parse_error: true,
    })
}

/// Maps a claim to independent / not independent. Any other reply is
/// retried once and then surfaces as `UnparseableVerdict`.
pub fn detect_independence(
    claim: &Claim,
    chat: &dyn ChatBackend,
    model: &str,
) -> Result<Independence, AnalysisError> {
    let req = ChatRequest::new(model, prompts::render_independence(&claim.text));
    let mut last = String::new();
    for _ in 0..2 {
        let reply = chat_complete(chat, &req)?;
        match strip_reply(&reply).to_lowercase().as_str() {
            "independent" => return Ok(Independence::Independent),
            "not independent" => return Ok(Independence::NotIndependent),
            _ => last = reply,
        }
    }
    Err(AnalysisError::UnparseableVerdict(last))
}

/// Rewrites a non-independent claim with context from the question and
/// answer, then re-checks independence on the enriched text. Returns the
/// new claim (origin `enriched`, parent set, relevance inherited) and the
/// lineage record. The original claim is untouched and enriched claims are
/// never re-enriched.
pub fn enrich_claim(
    question: &str,
    answer: &str,
    claim: &Claim,
    chat: &dyn ChatBackend,
    model: &str,
) -> Result<(Claim, EnrichmentOutcome), AnalysisError> {
    if claim.origin == ClaimOrigin::Enriched {
        return Err(AnalysisError::AlreadyEnriched(claim.id.clone()));
    }
    if claim.independence != Some(Independence::NotIndependent) {
        return Err(AnalysisError::NotEnrichable(claim.id.clone()));
    }

    let req = ChatRequest::new(model, prompts::render_enrichment(question, answer, &claim.text));
    let reply = chat_complete(chat, &req)?;
    let text = reply
        .trim()
        .trim_start_matches("Revised Claim:")
        .trim()
        .trim_matches('"')
        .trim()
        .to_string();
    if text.is_empty() {
        return Err(AnalysisError::UnparseableVerdict(reply));
    }

    let mut enriched = Claim::new(
        format!("{}-e", claim.id),
        &claim.record_id,
        text,
        ClaimOrigin::Enriched,
        Some(claim.id.clone()),
    )?;
    enriched.relevance = claim.relevance;
    let verdict = detect_independence(&enriched, chat, model)?;
    enriched.independence = Some(verdict);

    let outcome = EnrichmentOutcome {
        original_claim_id: claim.id.clone(),
        enriched_claim_id: enriched.id.clone(),
        resolved: verdict == Independence::Independent,
        before_len: claim.text.chars().count(),
        after_len: enriched.text.chars().count(),
    };
    Ok((enriched, outcome))
}

/// Resolution rate and mean claim lengths over a batch of outcomes.
pub fn enrichment_effect(outcomes: &[EnrichmentOutcome]) -> Result<EnrichmentEffect, AnalysisError> {
    if outcomes.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let total = outcomes.len();
    let resolved = outcomes.iter().filter(|o| o.resolved).count();
    let mean = |f: fn(&EnrichmentOutcome) -> usize| {
        outcomes.iter().map(|o| f(o) as f64).sum::<f64>() / total as f64
    };
    Ok(EnrichmentEffect {
        total,
        resolved,
        resolution_rate: resolved as f64 / total as f64,
        mean_before_len: mean(|o| o.before_len),
        mean_after_len: mean(|o| o.after_len),
    })
}
