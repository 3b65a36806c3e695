//! Single-stage execution over persisted artifacts, so expensive stages
//! (search, chat) are not repeated while iterating on later ones.
//!
//! Each stage reads the previous stage's jsonl artifact and produces the
//! next: segment -> claims.jsonl -> classify -> claims.jsonl (+labels,
//! enrichment.jsonl) -> retrieve -> evidence.jsonl -> relate ->
//! attribution.jsonl.

use super::report::{EvidenceRow, RunIssue};
use super::{load_corpus, sample_indices, PipelineError, RunConfig, SegmentationStrategy};
use crate::analysis::{
    classify_checkworthiness, detect_independence, enrich_claim, EnrichmentOutcome,
};
use crate::attribution::{aggregate_claim, relate_pair, ClaimAttribution, PairVerdict};
use crate::backends::BackendSet;
use crate::model::{Claim, EvidenceChunk, Independence, QARecord, RelevanceClass};
use crate::par::{Executor, Parallelism};
use crate::retrieval::{build_question_pool, retrieve_evidence};
use crate::segmentation::{dedupe_claims, segment_direct, segment_factscore, segment_sentences};
use std::collections::BTreeMap;

pub struct StageOutput {
    pub claims: Vec<Claim>,
    pub enrichment: Vec<EnrichmentOutcome>,
    pub issues: Vec<RunIssue>,
}

fn executor_for(config: &RunConfig) -> Executor {
    Executor::new(if config.fanout <= 1 {
        Parallelism::Sequential
    } else {
        Parallelism::Threads(config.fanout)
    })
}

fn issue(stage: &str, record: Option<&str>, claim: Option<&str>, message: String) -> RunIssue {
    RunIssue {
        stage: stage.into(),
        record_id: record.map(str::to_string),
        claim_id: claim.map(str::to_string),
        url: None,
        message,
    }
}

fn sampled_records(config: &RunConfig) -> Result<Vec<QARecord>, PipelineError> {
    let records = load_corpus(&config.corpus)?;
    Ok(match config.max_records {
        Some(cap) => sample_indices(records.len(), cap, config.seed, 0)
            .into_iter()
            .map(|i| records[i].clone())
            .collect(),
        None => records,
    })
}

fn corpus_by_id(config: &RunConfig) -> Result<BTreeMap<String, QARecord>, PipelineError> {
    Ok(load_corpus(&config.corpus)?
        .into_iter()
        .map(|r| (r.id.clone(), r))
        .collect())
}

/// Segmentation + duplicate removal for the configured corpus.
pub fn segment_stage(
    config: &RunConfig,
    backends: &BackendSet,
) -> Result<StageOutput, PipelineError> {
    config.validate()?;
    let records = sampled_records(config)?;
    let executor = executor_for(config);
    let model = config.backends.chat_model.as_str();

    let mut claims = Vec::new();
    let mut issues = Vec::new();
    let outcomes = executor.map_ordered(&records, |record| match config.strategy {
        SegmentationStrategy::Sentence => segment_sentences(record).map(|claims| {
            crate::segmentation::SegmentationOutcome {
                claims,
                ..Default::default()
            }
        }),
        SegmentationStrategy::PromptFactscore => {
            segment_factscore(record, backends.chat.as_ref(), model, &executor)
        }
        SegmentationStrategy::DirectWithContext => {
            segment_direct(record, backends.chat.as_ref(), model)
        }
    });
    for (record, outcome) in records.iter().zip(outcomes) {
        match outcome {
            Ok(outcome) => {
                for seg_issue in &outcome.issues {
                    issues.push(issue(
                        "segment",
                        Some(&record.id),
                        None,
                        seg_issue.message.clone(),
                    ));
                }
                claims.extend(dedupe_claims(outcome.claims).claims);
            }
            Err(e) => issues.push(issue("segment", Some(&record.id), None, e.to_string())),
        }
    }
    Ok(StageOutput {
        claims,
        enrichment: Vec::new(),
        issues,
    })
}

/// Check-worthiness for every claim; with enrichment enabled, also
/// independence detection and enrichment of non-independent factual
/// claims. Enriched claims are appended after their record's claims.
pub fn classify_stage(
    config: &RunConfig,
    backends: &BackendSet,
    claims: Vec<Claim>,
) -> Result<StageOutput, PipelineError> {
    config.validate()?;
    let corpus = corpus_by_id(config)?;
    let executor = executor_for(config);
    let model = config.backends.chat_model.as_str();
    let mut issues = Vec::new();

    let mut claims = claims;
    let classifications = executor.map_ordered(&claims, |claim| {
        classify_checkworthiness(claim, backends.chat.as_ref(), model)
    });
    for (claim, result) in claims.iter_mut().zip(classifications) {
        match result {
            Ok(outcome) => {
                claim.relevance = Some(outcome.relevance);
                if outcome.parse_error {
                    issues.push(issue(
                        "classify",
                        Some(&claim.record_id),
                        Some(&claim.id),
                        "unparseable check-worthiness reply; classified as other".into(),
                    ));
                }
            }
            Err(e) => {
                claim.relevance = Some(RelevanceClass::Other);
                issues.push(issue(
                    "classify",
                    Some(&claim.record_id),
                    Some(&claim.id),
                    e.to_string(),
                ));
            }
        }
    }

    let mut enrichment = Vec::new();
    if config.enrichment {
        let factual: Vec<usize> = claims
            .iter()
            .enumerate()
            .filter(|(_, c)| c.relevance == Some(RelevanceClass::FactualClaim))
            .map(|(i, _)| i)
            .collect();
        let verdicts = executor.map_ordered(&factual, |&i| {
            detect_independence(&claims[i], backends.chat.as_ref(), model)
        });
        for (&i, verdict) in factual.iter().zip(&verdicts) {
            match verdict {
                Ok(v) => claims[i].independence = Some(*v),
                Err(e) => issues.push(issue(
                    "independence",
                    Some(&claims[i].record_id),
                    Some(&claims[i].id),
                    e.to_string(),
                )),
            }
        }

        let to_enrich: Vec<usize> = factual
            .into_iter()
            .filter(|&i| claims[i].independence == Some(Independence::NotIndependent))
            .collect();
        let mut appended: BTreeMap<String, Vec<Claim>> = BTreeMap::new();
        let enriched = executor.map_ordered(&to_enrich, |&i| {
            let claim = &claims[i];
            let record = corpus.get(&claim.record_id).ok_or_else(|| {
                PipelineError::Config(format!(
                    "claim {} references unknown record {}",
                    claim.id, claim.record_id
                ))
            })?;
            enrich_claim(
                &record.question,
                &record.answer,
                claim,
                backends.chat.as_ref(),
                model,
            )
            .map_err(|e| PipelineError::Config(e.to_string()))
        });
        for (&i, result) in to_enrich.iter().zip(enriched) {
            match result {
                Ok((claim, outcome)) => {
                    enrichment.push(outcome);
                    appended
                        .entry(claim.record_id.clone())
                        .or_default()
                        .push(claim);
                }
                Err(e) => issues.push(issue(
                    "enrich",
                    Some(&claims[i].record_id),
                    Some(&claims[i].id),
                    e.to_string(),
                )),
            }
        }
        // Keep record grouping: enriched claims go after the last claim of
        // their record.
        let mut grouped: Vec<Claim> = Vec::with_capacity(claims.len());
        let mut last_of_record: BTreeMap<String, usize> = BTreeMap::new();
        for (i, claim) in claims.iter().enumerate() {
            last_of_record.insert(claim.record_id.clone(), i);
        }
        for (i, claim) in claims.into_iter().enumerate() {
            let record_id = claim.record_id.clone();
            grouped.push(claim);
            if last_of_record.get(&record_id) == Some(&i) {
                if let Some(extra) = appended.remove(&record_id) {
                    grouped.extend(extra);
                }
            }
        }
        claims = grouped;
    }

    Ok(StageOutput {
        claims,
        enrichment,
        issues,
    })
}

/// Indices of claims that enter retrieval: factual, with enriched versions
/// replacing their parents.
pub fn retrieval_eligible(claims: &[Claim]) -> Vec<usize> {
    let enriched_parents: Vec<&str> = claims
        .iter()
        .filter_map(|c| c.parent_claim_id.as_deref())
        .collect();
    claims
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            c.relevance == Some(RelevanceClass::FactualClaim)
                && !enriched_parents.contains(&c.id.as_str())
        })
        .map(|(i, _)| i)
        .collect()
}

/// Evidence retrieval per record over labeled claims.
pub fn retrieve_stage(
    config: &RunConfig,
    backends: &BackendSet,
    claims: &[Claim],
) -> Result<(Vec<EvidenceRow>, Vec<RunIssue>), PipelineError> {
    config.validate()?;
    let executor = executor_for(config);
    let mut issues = Vec::new();
    let mut rows = Vec::new();

    let eligible = retrieval_eligible(claims);
    let mut by_record: BTreeMap<&str, Vec<&Claim>> = BTreeMap::new();
    for &i in &eligible {
        by_record
            .entry(claims[i].record_id.as_str())
            .or_default()
            .push(&claims[i]);
    }

    for (record_id, record_claims) in by_record {
        let pool = match build_question_pool(
            record_id,
            &record_claims,
            &config.retrieval,
            backends,
            &executor,
        ) {
            Ok(pool) => pool,
            Err(e) => {
                issues.push(issue("search", Some(record_id), None, e.to_string()));
                continue;
            }
        };
        for failure in &pool.failures {
            issues.push(RunIssue {
                stage: "fetch".into(),
                record_id: Some(record_id.to_string()),
                claim_id: None,
                url: Some(failure.url.clone()),
                message: failure.error.clone(),
            });
        }
        for claim in record_claims {
            match retrieve_evidence(claim, &pool, &config.retrieval, backends) {
                Ok(scored) => {
                    for sc in scored {
                        rows.push(EvidenceRow {
                            claim_id: claim.id.clone(),
                            chunk_id: sc.chunk.id,
                            url: sc.chunk.url,
                            chunk_index: sc.chunk.chunk_index,
                            window: sc.chunk.window_size,
                            text: sc.chunk.text,
                            score: sc.score,
                        });
                    }
                }
                Err(e) => issues.push(issue(
                    "retrieve",
                    Some(record_id),
                    Some(&claim.id),
                    e.to_string(),
                )),
            }
        }
    }
    Ok((rows, issues))
}

/// Pair classification + claim aggregation over persisted evidence rows.
/// For retrieval-eligible claims with no evidence rows the verdict is
/// missing.
pub fn relate_stage(
    config: &RunConfig,
    backends: &BackendSet,
    claims: &[Claim],
    evidence: &[EvidenceRow],
) -> Result<(Vec<ClaimAttribution>, Vec<RunIssue>), PipelineError> {
    config.validate()?;
    let corpus = corpus_by_id(config)?;
    let executor = executor_for(config);
    let mut issues = Vec::new();

    let mut rows_by_claim: BTreeMap<&str, Vec<&EvidenceRow>> = BTreeMap::new();
    for row in evidence {
        rows_by_claim.entry(row.claim_id.as_str()).or_default().push(row);
    }

    let eligible = retrieval_eligible(claims);
    let targets: Vec<&Claim> = eligible.iter().map(|&i| &claims[i]).collect();

    struct ClaimOutcome {
        attribution: Option<ClaimAttribution>,
        issues: Vec<RunIssue>,
    }

    let outcomes: Vec<ClaimOutcome> = executor.map_ordered(&targets, |claim| {
        let mut out = ClaimOutcome {
            attribution: None,
            issues: Vec::new(),
        };
        let question = match corpus.get(&claim.record_id) {
            Some(record) => record.question.as_str(),
            None => {
                out.issues.push(issue(
                    "relate",
                    Some(&claim.record_id),
                    Some(&claim.id),
                    "claim references a record missing from the corpus".into(),
                ));
                return out;
            }
        };
        let rows = rows_by_claim.get(claim.id.as_str()).cloned().unwrap_or_default();
        let mut verdicts: Vec<PairVerdict> = Vec::with_capacity(rows.len());
        for row in rows {
            // Reconstructed chunk: relation classification only needs the
            // text and id, not the embedding.
            let chunk = match EvidenceChunk::new(
                row.chunk_id.clone(),
                row.url.clone(),
                row.chunk_index,
                row.text.clone(),
                row.window.max(row.text.chars().count()),
                vec![1.0],
            ) {
                Ok(chunk) => chunk,
                Err(e) => {
                    out.issues.push(issue(
                        "relate",
                        Some(&claim.record_id),
                        Some(&claim.id),
                        format!("bad evidence row: {e}"),
                    ));
                    return out;
                }
            };
            match relate_pair(
                claim,
                &chunk,
                Some(row.score),
                question,
                config.attribution_method,
                backends,
                &config.backends.chat_model,
            ) {
                Ok(verdict) => verdicts.push(verdict),
                Err(e) => {
                    out.issues.push(issue(
                        "relate",
                        Some(&claim.record_id),
                        Some(&claim.id),
                        e.to_string(),
                    ));
                    return out;
                }
            }
        }
        out.attribution =
            Some(aggregate_claim(&claim.id, &verdicts).expect("verdicts built for this claim"));
        out
    });

    let mut attributions = Vec::new();
    for outcome in outcomes {
        if let Some(a) = outcome.attribution {
            attributions.push(a);
        }
        issues.extend(outcome.issues);
    }
    Ok((attributions, issues))
}
