//! Claim-evidence relation classification and aggregation.
//!
//! A pair verdict comes from either the few-shot relation prompt or the
//! encoder NLI backend (chunk as premise, claim as hypothesis). Claim-level
//! aggregation is any-entailed > any-contradicted > no-relation, with
//! `missing` reserved for claims that retrieved zero chunks.

use crate::backends::{chat_complete, nli_classify, BackendError, BackendSet, ChatRequest, NliLabel};
use crate::model::{Claim, EvidenceChunk, Relation, RelationLabel};
use crate::prompts;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable relation verdict after retry: {0:?}")]
    UnparseableVerdict(String),
    #[error("verdict list mixes claim ids {0} and {1}")]
    MixedClaimIds(String, String),
    #[error("pair verdicts cannot carry the missing label")]
    MissingAtPairLevel,
    #[error("empty input")]
    EmptyInput,
    #[error("granularity mismatch: {0:?} vs {1:?}")]
    GranularityMismatch(Granularity, Granularity),
}

/// How a pair verdict was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PromptLlm,
    /// Stricter and better correlated with human judgment; the default.
    #[default]
    EncoderNli,
}

/// Relation verdict for one (claim, chunk) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub claim_id: String,
    pub chunk_id: String,
    pub relation: Relation,
    pub method: Method,
}

impl PairVerdict {
    pub fn new(
        claim_id: impl Into<String>,
        chunk_id: impl Into<String>,
        relation: Relation,
        method: Method,
    ) -> Result<Self, AttributionError> {
        if relation.label == RelationLabel::Missing {
            return Err(AttributionError::MissingAtPairLevel);
        }
        Ok(PairVerdict {
            claim_id: claim_id.into(),
            chunk_id: chunk_id.into(),
            relation,
            method,
        })
    }
}

/// Claim-level verdict with its supporting chunks and the underlying pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimAttribution {
    pub claim_id: String,
    pub verdict: Relation,
    pub supporting_chunk_ids: Vec<String>,
    pub pair_verdicts: Vec<PairVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Pair,
    Claim,
}

/// Counts and shares per relation over one granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDistribution {
    pub granularity: Granularity,
    pub total: usize,
    pub counts: BTreeMap<RelationLabel, usize>,
    pub shares: BTreeMap<RelationLabel, f64>,
}

impl RelationDistribution {
    fn from_labels(
        granularity: Granularity,
        labels: impl Iterator<Item = RelationLabel>,
    ) -> Result<Self, AttributionError> {
        let mut counts: BTreeMap<RelationLabel, usize> =
            RelationLabel::ALL.iter().map(|&l| (l, 0)).collect();
        let mut total = 0usize;
        for label in labels {
            *counts.get_mut(&label).expect("all labels present") += 1;
            total += 1;
        }
        if total == 0 {
            return Err(AttributionError::EmptyInput);
        }
        let shares = counts
            .iter()
            .map(|(&l, &c)| (l, c as f64 / total as f64))
            .collect();
        Ok(RelationDistribution {
            granularity,
            total,
            counts,
            shares,
        })
    }

    pub fn from_pairs(pairs: &[PairVerdict]) -> Result<Self, AttributionError> {
        Self::from_labels(Granularity::Pair, pairs.iter().map(|p| p.relation.label))
    }

    pub fn from_claims(claims: &[ClaimAttribution]) -> Result<Self, AttributionError> {
        Self::from_labels(Granularity::Claim, claims.iter().map(|c| c.verdict.label))
    }

    pub fn share(&self, label: RelationLabel) -> f64 {
        self.shares.get(&label).copied().unwrap_or(0.0)
    }

    pub fn count(&self, label: RelationLabel) -> usize {
        self.counts.get(&label).copied().unwrap_or(0)
    }
}

fn strip_reply(reply: &str) -> String {
    reply
        .trim()
        .trim_matches(|c| matches!(c, '"' | '\'' | '`'))
        .trim()
        .trim_end_matches('.')
        .to_lowercase()
}

/// Classifies one (claim, chunk) pair. The prompt method issues the
/// few-shot relation prompt and expects one of the three verdict strings
/// (one retry); the encoder method maps entailment/contradiction/neutral
/// onto entailed/contradicted/no_relation.
pub fn relate_pair(
    claim: &Claim,
    chunk: &EvidenceChunk,
    similarity: Option<f32>,
    question: &str,
    method: Method,
    backends: &BackendSet,
    chat_model: &str,
) -> Result<PairVerdict, AttributionError> {
    let label = match method {
        Method::PromptLlm => {
            let req = ChatRequest::new(
                chat_model,
                prompts::render_relation(question, &claim.text, &chunk.text),
            );
            let mut last = String::new();
            let mut verdict = None;
            for _ in 0..2 {
                let reply = chat_complete(backends.chat.as_ref(), &req)?;
                match strip_reply(&reply).as_str() {
                    "entailed" => verdict = Some(RelationLabel::Entailed),
                    "contradicted" => verdict = Some(RelationLabel::Contradicted),
                    "no_relation" => verdict = Some(RelationLabel::NoRelation),
                    _ => {
                        last = reply;
                        continue;
                    }
                }
                break;
            }
            verdict.ok_or(AttributionError::UnparseableVerdict(last))?
        }
        Method::EncoderNli => {
            let verdict = nli_classify(backends.nli.as_ref(), &chunk.text, &claim.text)?;
            match verdict.label {
                NliLabel::Entailment => RelationLabel::Entailed,
                NliLabel::Contradiction => RelationLabel::Contradicted,
                NliLabel::Neutral => RelationLabel::NoRelation,
            }
        }
    };
    let relation = match similarity {
        Some(score) => Relation::with_score(label, score),
        None => Relation::new(label),
    };
    PairVerdict::new(&claim.id, &chunk.id, relation, method)
}

/// Reduces pair verdicts to a claim verdict. No pairs means the claim is
/// `missing`; otherwise any entailed pair wins, then any contradicted,
/// then no_relation. Supporting chunk ids are sorted, so the result does
/// not depend on pair order.
pub fn aggregate_claim(
    claim_id: &str,
    verdicts: &[PairVerdict],
) -> Result<ClaimAttribution, AttributionError> {
    for v in verdicts {
        if v.claim_id != claim_id {
            return Err(AttributionError::MixedClaimIds(
                claim_id.to_string(),
                v.claim_id.clone(),
            ));
        }
    }
    if verdicts.is_empty() {
        return Ok(ClaimAttribution {
            claim_id: claim_id.to_string(),
            verdict: Relation::new(RelationLabel::Missing),
            supporting_chunk_ids: Vec::new(),
            pair_verdicts: Vec::new(),
        });
    }
    let mut supporting: Vec<String> = verdicts
        .iter()
        .filter(|v| v.relation.label == RelationLabel::Entailed)
        .map(|v| v.chunk_id.clone())
        .collect();
    supporting.sort();
    let label = if !supporting.is_empty() {
        RelationLabel::Entailed
    } else if verdicts
        .iter()
        .any(|v| v.relation.label == RelationLabel::Contradicted)
    {
        RelationLabel::Contradicted
    } else {
        RelationLabel::NoRelation
    };
    Ok(ClaimAttribution {
        claim_id: claim_id.to_string(),
        verdict: Relation::new(label),
        supporting_chunk_ids: supporting,
        pair_verdicts: verdicts.to_vec(),
    })
}

/// Percentage-point drop of the no_relation share between two
/// distributions of the same granularity.
pub fn no_relation_reduction(
    before: &RelationDistribution,
    after: &RelationDistribution,
) -> Result<f64, AttributionError> {
    if before.granularity != after.granularity {
        return Err(AttributionError::GranularityMismatch(
            before.granularity,
            after.granularity,
        ));
    }
    Ok((before.share(RelationLabel::NoRelation) - after.share(RelationLabel::NoRelation)) * 100.0)
}
