//! Shared domain types and the deterministic text/metric utilities used by
//! every pipeline stage.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// A question plus the model response being attributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl QARecord {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        answer: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let record = QARecord {
            id: id.into(),
            question: question.into(),
            answer: answer.into(),
            meta: BTreeMap::new(),
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id.trim().is_empty() {
            return Err(ModelError::InvalidInput("record id is empty".into()));
        }
        if self.question.trim().is_empty() {
            return Err(ModelError::InvalidInput(format!(
                "record {}: question is empty",
                self.id
            )));
        }
        if self.answer.trim().is_empty() {
            return Err(ModelError::InvalidInput(format!(
                "record {}: answer is empty",
                self.id
            )));
        }
        Ok(())
    }
}

/// How a claim was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimOrigin {
    Sentence,
    PromptFactscore,
    DirectWithContext,
    Enriched,
}

impl ClaimOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            ClaimOrigin::Sentence => "sentence",
            ClaimOrigin::PromptFactscore => "prompt_factscore",
            ClaimOrigin::DirectWithContext => "direct_with_context",
            ClaimOrigin::Enriched => "enriched",
        }
    }
}

/// Check-worthiness class of a claim. The integer codes match the reply
/// format of the classification prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceClass {
    FactualClaim,
    Opinion,
    NotAClaim,
    Other,
}

impl RelevanceClass {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(RelevanceClass::FactualClaim),
            2 => Some(RelevanceClass::Opinion),
            3 => Some(RelevanceClass::NotAClaim),
            4 => Some(RelevanceClass::Other),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            RelevanceClass::FactualClaim => 1,
            RelevanceClass::Opinion => 2,
            RelevanceClass::NotAClaim => 3,
            RelevanceClass::Other => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RelevanceClass::FactualClaim => "factual",
            RelevanceClass::Opinion => "opinion",
            RelevanceClass::NotAClaim => "not a claim",
            RelevanceClass::Other => "other",
        }
    }

    pub const ALL: [RelevanceClass; 4] = [
        RelevanceClass::FactualClaim,
        RelevanceClass::Opinion,
        RelevanceClass::NotAClaim,
        RelevanceClass::Other,
    ];
}

/// Whether a claim can be verified without additional context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Independence {
    Independent,
    NotIndependent,
}

/// A segmented claim with provenance and classification labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub record_id: String,
    pub text: String,
    pub origin: ClaimOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_claim_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<RelevanceClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub independence: Option<Independence>,
    pub fingerprint: u64,
}

impl Claim {
    /// Builds a claim, computing its fingerprint from the normalized text.
    /// Enriched claims must carry a parent id; all other origins must not.
    pub fn new(
        id: impl Into<String>,
        record_id: impl Into<String>,
        text: impl Into<String>,
        origin: ClaimOrigin,
        parent_claim_id: Option<String>,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::InvalidInput("claim text is empty".into()));
        }
        match (origin, &parent_claim_id) {
            (ClaimOrigin::Enriched, None) => {
                return Err(ModelError::InvalidInput(
                    "enriched claim without parent_claim_id".into(),
                ))
            }
            (ClaimOrigin::Enriched, Some(_)) => {}
            (_, Some(_)) => {
                return Err(ModelError::InvalidInput(
                    "parent_claim_id set on a non-enriched claim".into(),
                ))
            }
            (_, None) => {}
        }
        let fingerprint = fingerprint(&text);
        Ok(Claim {
            id: id.into(),
            record_id: record_id.into(),
            text,
            origin,
            parent_claim_id,
            relevance: None,
            independence: None,
            fingerprint,
        })
    }
}

/// An embedded window of extracted page text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceChunk {
    pub id: String,
    pub url: String,
    pub chunk_index: usize,
    pub text: String,
    pub window_size: usize,
    pub embedding: Vec<f32>,
}

impl EvidenceChunk {
    pub fn new(
        id: impl Into<String>,
        url: impl Into<String>,
        chunk_index: usize,
        text: impl Into<String>,
        window_size: usize,
        embedding: Vec<f32>,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        let len = text.chars().count();
        if len == 0 || len > window_size {
            return Err(ModelError::InvalidInput(format!(
                "chunk text length {len} outside (0, {window_size}]"
            )));
        }
        let norm: f32 = embedding.iter().map(|x| x * x).sum::<f32>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(ModelError::InvalidInput(format!(
                "chunk embedding norm {norm} is not unit"
            )));
        }
        Ok(EvidenceChunk {
            id: id.into(),
            url: url.into(),
            chunk_index,
            text,
            window_size,
            embedding,
        })
    }
}

/// Claim-evidence verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationLabel {
    Entailed,
    Contradicted,
    NoRelation,
    Missing,
}

impl RelationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Entailed => "entailed",
            RelationLabel::Contradicted => "contradicted",
            RelationLabel::NoRelation => "no_relation",
            RelationLabel::Missing => "missing",
        }
    }

    pub const ALL: [RelationLabel; 4] = [
        RelationLabel::Entailed,
        RelationLabel::Contradicted,
        RelationLabel::NoRelation,
        RelationLabel::Missing,
    ];
}

/// A relation verdict plus the similarity score of the underlying chunk,
/// when one was retrieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub label: RelationLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f32>,
}

impl Relation {
    pub fn new(label: RelationLabel) -> Self {
        Relation { label, score: None }
    }

    pub fn with_score(label: RelationLabel, score: f32) -> Self {
        Relation {
            label,
            score: Some(score),
        }
    }
}

/// Precision/recall/F1 with the underlying counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRFResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Lowercases, trims, collapses internal whitespace runs to single spaces,
/// and strips one terminal period. Used for duplicate detection.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.trim().chars() {
        if ch.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            for lower in ch.to_lowercase() {
                out.push(lower);
            }
        }
    }
    if out.ends_with('.') {
        out.pop();
    }
    out
}

/// Stable 64-bit content hash of the normalized text. Equal normalized
/// texts hash equal; the value is stable across runs and platforms.
pub fn fingerprint(text: &str) -> u64 {
    let digest = Sha256::digest(normalize_text(text).as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8-byte prefix"))
}

/// Precision/recall/F1 over parallel gold/predicted boolean labels, with
/// true as the positive class. 0/0 ratios are defined as 0.
pub fn compute_prf(gold: &[bool], predicted: &[bool]) -> Result<PRFResult, ModelError> {
    if gold.is_empty() {
        return Err(ModelError::InvalidInput("empty label lists".into()));
    }
    if gold.len() != predicted.len() {
        return Err(ModelError::InvalidInput(format!(
            "label length mismatch: {} gold vs {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&g, &p) in gold.iter().zip(predicted) {
        match (g, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(prf_from_counts(tp, fp, fn_))
}

/// Same arithmetic as [`compute_prf`], starting from raw counts.
pub fn prf_from_counts(tp: usize, fp: usize, fn_: usize) -> PRFResult {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    PRFResult {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    }
}
