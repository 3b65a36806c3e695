//! End-to-end orchestration: corpus ingestion, the post-hoc retrieval
//! pipeline (segment -> dedup -> check-worthiness -> optional
//! independence/enrichment -> retrieve -> relate -> aggregate), run
//! comparison, and report persistence.

pub mod report;
pub mod stages;

use crate::analysis::{
    classify_checkworthiness, detect_independence, enrich_claim, enrichment_effect,
};
use crate::attribution::{
    aggregate_claim, no_relation_reduction, relate_pair, ClaimAttribution, Method, PairVerdict,
    RelationDistribution,
};
use crate::backends::cache::{CacheLayer, CacheMode, CallBudget, ResponseCache};
use crate::backends::http::{
    HttpChatBackend, HttpEmbedBackend, HttpFetcher, HttpNliBackend, HttpSearchBackend, RetryPolicy,
};
use crate::backends::{BackendError, BackendSet, Unconfigured};
use crate::model::{Claim, ClaimOrigin, Independence, QARecord, RelevanceClass};
use crate::par::{Executor, Parallelism};
use crate::retrieval::{build_question_pool, retrieve_evidence, RetrievalConfig};
use crate::segmentation::{
    dedupe_claims, segment_direct, segment_factscore, segment_sentences, split_sentences,
    SegStats, SegmentationOutcome,
};
use rand::SeedableRng;
use report::{EvidenceRow, RecordReport, RelevanceDistribution, RunIssue, RunReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("corpus {path}: {detail}")]
    CorpusIo { path: String, detail: String },
    #[error("corpus line {line}: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("duplicate record id {id} at corpus line {line}")]
    DuplicateRecordId { id: String, line: usize },
    #[error("io error on {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("corpus mismatch: {0} vs {1}")]
    CorpusMismatch(String, String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl PipelineError {
    /// CLI exit code: 2 for corpus problems, 1 for everything else fatal.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::CorpusIo { .. }
            | PipelineError::MalformedRecord { .. }
            | PipelineError::DuplicateRecordId { .. }
            | PipelineError::CorpusMismatch(_, _) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineSetting {
    #[default]
    Phr,
    /// Retrieve-then-read is out of scope; selecting it is a config error.
    Rtr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentationStrategy {
    #[default]
    Sentence,
    PromptFactscore,
    DirectWithContext,
}

impl SegmentationStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentationStrategy::Sentence => "sentence",
            SegmentationStrategy::PromptFactscore => "prompt_factscore",
            SegmentationStrategy::DirectWithContext => "direct_with_context",
        }
    }
}

/// Service endpoints. A missing URL (config and environment both empty)
/// leaves that service unconfigured, which only matters if a cache miss
/// actually reaches it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chat_url: Option<String>,
    pub chat_model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_url: Option<String>,
    pub embed_model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nli_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_url: Option<String>,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            chat_url: None,
            chat_model: "gpt-3.5-turbo".into(),
            embed_url: None,
            embed_model: "text-embedding-ada-002".into(),
            nli_url: None,
            search_url: None,
            timeout_secs: 60,
        }
    }
}

pub mod env_vars {
    pub const CHAT_URL: &str = "ATTRIBUTOR_CHAT_URL";
    pub const CHAT_KEY: &str = "ATTRIBUTOR_CHAT_KEY";
    pub const EMBED_URL: &str = "ATTRIBUTOR_EMBED_URL";
    pub const EMBED_KEY: &str = "ATTRIBUTOR_EMBED_KEY";
    pub const NLI_URL: &str = "ATTRIBUTOR_NLI_URL";
    pub const NLI_KEY: &str = "ATTRIBUTOR_NLI_KEY";
    pub const SEARCH_URL: &str = "ATTRIBUTOR_SEARCH_URL";
    pub const SEARCH_KEY: &str = "ATTRIBUTOR_SEARCH_KEY";
    pub const CACHE_DIR: &str = "ATTRIBUTOR_CACHE_DIR";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub mode: CacheMode,
    /// Cache root; falls back to `ATTRIBUTOR_CACHE_DIR`, then
    /// `attributor-cache` in the working directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Upstream-call allowance for the whole run; cache hits are free.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_upstream_calls: Option<u32>,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            mode: CacheMode::Record,
            dir: None,
            max_upstream_calls: None,
        }
    }
}

/// The full description of one run; the report embeds a snapshot of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub setting: PipelineSetting,
    pub strategy: SegmentationStrategy,
    pub enrichment: bool,
    pub retrieval: RetrievalConfig,
    pub attribution_method: Method,
    pub backends: BackendConfig,
    pub cache: CacheConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_records: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_claims: Option<usize>,
    pub seed: u64,
    /// Bounded parallel fan-out for backend calls; <= 1 runs sequentially.
    pub fanout: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::new(),
            setting: PipelineSetting::Phr,
            strategy: SegmentationStrategy::Sentence,
            enrichment: false,
            retrieval: RetrievalConfig::default(),
            attribution_method: Method::EncoderNli,
            backends: BackendConfig::default(),
            cache: CacheConfig::default(),
            max_records: None,
            max_claims: None,
            seed: 0,
            fanout: 4,
        }
    }
}

impl RunConfig {
    /// Reads a config file; `.json` parses as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        };
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.setting == PipelineSetting::Rtr {
            return Err(PipelineError::Config(
                "the retrieve-then-read (rtr) setting is not implemented; use phr".into(),
            ));
        }
        if self.corpus.as_os_str().is_empty() {
            return Err(PipelineError::Config("corpus path is empty".into()));
        }
        self.retrieval
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache
            .dir
            .clone()
            .or_else(|| std::env::var(env_vars::CACHE_DIR).ok().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("attributor-cache"))
    }
}

fn env_or(config_value: &Option<String>, var: &str) -> Option<String> {
    config_value
        .clone()
        .or_else(|| std::env::var(var).ok())
        .filter(|s| !s.is_empty())
}

/// Builds the HTTP backend set described by the config and routes it
/// through the cache layer. Unconfigured services stay behind the cache,
/// so replay runs never need endpoints.
pub fn build_backends(config: &RunConfig) -> Result<BackendSet, PipelineError> {
    let timeout = Duration::from_secs(config.backends.timeout_secs);
    let retry = RetryPolicy::default();

    let chat: Arc<dyn crate::backends::ChatBackend> =
        match env_or(&config.backends.chat_url, env_vars::CHAT_URL) {
            Some(url) => Arc::new(HttpChatBackend::new(
                &url,
                std::env::var(env_vars::CHAT_KEY).ok(),
                timeout,
                retry,
            )?),
            None => Arc::new(Unconfigured("chat")),
        };
    let embed: Arc<dyn crate::backends::EmbedBackend> =
        match env_or(&config.backends.embed_url, env_vars::EMBED_URL) {
            Some(url) => Arc::new(HttpEmbedBackend::new(
                &url,
                config.backends.embed_model.clone(),
                std::env::var(env_vars::EMBED_KEY).ok(),
                timeout,
                retry,
            )?),
            None => Arc::new(Unconfigured("embed")),
        };
    let nli: Arc<dyn crate::backends::NliBackend> =
        match env_or(&config.backends.nli_url, env_vars::NLI_URL) {
            Some(url) => Arc::new(HttpNliBackend::new(
                url,
                std::env::var(env_vars::NLI_KEY).ok(),
                timeout,
                retry,
            )?),
            None => Arc::new(Unconfigured("nli")),
        };
    let search: Arc<dyn crate::backends::SearchBackend> =
        match env_or(&config.backends.search_url, env_vars::SEARCH_URL) {
            Some(url) => Arc::new(HttpSearchBackend::new(
                url,
                std::env::var(env_vars::SEARCH_KEY).ok(),
                timeout,
                retry,
            )?),
            None => Arc::new(Unconfigured("search")),
        };
    let fetcher: Arc<dyn crate::backends::PageFetcher> = Arc::new(HttpFetcher::new(
        Duration::from_secs(config.retrieval.fetch_timeout_secs),
        config.retrieval.max_page_bytes,
    )?);

    let inner = BackendSet {
        chat,
        embed,
        nli,
        search,
        fetcher,
    };
    wrap_with_cache(config, inner)
}

/// Routes any backend set (HTTP or mock) through the configured cache.
pub fn wrap_with_cache(
    config: &RunConfig,
    inner: BackendSet,
) -> Result<BackendSet, PipelineError> {
    let mut layer = match config.cache.mode {
        CacheMode::Live => CacheLayer::live(),
        mode => {
            let store = Arc::new(ResponseCache::open(config.cache_dir())?);
            CacheLayer::new(store, mode)
        }
    };
    if let Some(max) = config.cache.max_upstream_calls {
        layer = layer.with_budget(Arc::new(CallBudget::new(max)));
    }
    Ok(inner.cached(layer))
}

/// Loads a line-delimited JSON corpus: `{id, question, answer, meta?}` per
/// line. Blank lines are skipped; malformed lines and duplicate ids are
/// reported with their line number.
pub fn load_corpus(path: &Path) -> Result<Vec<QARecord>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::CorpusIo {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut records: Vec<QARecord> = Vec::new();
    let mut seen = BTreeMap::new();
    for (offset, line) in text.lines().enumerate() {
        let line_no = offset + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: QARecord =
            serde_json::from_str(line).map_err(|e| PipelineError::MalformedRecord {
                line: line_no,
                detail: e.to_string(),
            })?;
        record
            .validate()
            .map_err(|e| PipelineError::MalformedRecord {
                line: line_no,
                detail: e.to_string(),
            })?;
        if let Some(_first) = seen.insert(record.id.clone(), line_no) {
            return Err(PipelineError::DuplicateRecordId {
                id: record.id,
                line: line_no,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Stable fingerprint of the corpus content, used to pair comparable runs.
pub fn corpus_fingerprint(records: &[QARecord]) -> String {
    let mut hasher = Sha256::new();
    for r in records {
        hasher.update(r.id.as_bytes());
        hasher.update(b"\0");
        hasher.update(r.question.as_bytes());
        hasher.update(b"\0");
        hasher.update(r.answer.as_bytes());
        hasher.update(b"\n");
    }
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn run_id(config: &RunConfig, corpus_fp: &str) -> String {
    let config_json = serde_json::to_value(config).unwrap_or_default();
    let canonical = crate::backends::cache::canonical_json(&config_json);
    let digest = Sha256::digest(format!("{canonical}\n{corpus_fp}").as_bytes());
    hex(&digest)[..16].to_string()
}

/// Seeded sample of `cap` indices out of `total`, returned sorted so the
/// original order is preserved downstream.
pub(crate) fn sample_indices(total: usize, cap: usize, seed: u64, salt: u64) -> Vec<usize> {
    if cap >= total {
        return (0..total).collect();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ salt);
    let mut picked = rand::seq::index::sample(&mut rng, total, cap).into_vec();
    picked.sort_unstable();
    picked
}

struct PhaseA {
    report: RecordReport,
    issues: Vec<RunIssue>,
    seg_len_sum: f64,
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

/// Segmentation, dedup, check-worthiness, and optional independence +
/// enrichment for one record. Backend failures become issues; the record
/// still contributes whatever succeeded.
fn phase_a(
    record: &QARecord,
    config: &RunConfig,
    backends: &BackendSet,
    executor: &Executor,
) -> PhaseA {
    let mut issues = Vec::new();
    let model = config.backends.chat_model.as_str();
    let sentence_count = split_sentences(&record.answer).len();

    let outcome: SegmentationOutcome = match config.strategy {
        SegmentationStrategy::Sentence => match segment_sentences(record) {
            Ok(claims) => SegmentationOutcome {
                claims,
                ..Default::default()
            },
            Err(e) => {
                issues.push(issue("segment", Some(&record.id), None, e.to_string()));
                SegmentationOutcome::default()
            }
        },
        SegmentationStrategy::PromptFactscore => {
            match segment_factscore(record, backends.chat.as_ref(), model, executor) {
                Ok(outcome) => outcome,
                Err(e) => {
                    issues.push(issue("segment", Some(&record.id), None, e.to_string()));
                    SegmentationOutcome::default()
                }
            }
        }
        SegmentationStrategy::DirectWithContext => {
            match segment_direct(record, backends.chat.as_ref(), model) {
                Ok(outcome) => outcome,
                Err(e) => {
                    issues.push(issue("segment", Some(&record.id), None, e.to_string()));
                    SegmentationOutcome::default()
                }
            }
        }
    };
    for seg_issue in &outcome.issues {
        issues.push(issue(
            "segment",
            Some(&record.id),
            None,
            match seg_issue.sentence_index {
                Some(idx) => format!("sentence {idx}: {}", seg_issue.message),
                None => seg_issue.message.clone(),
            },
        ));
    }

    let total_segmented = outcome.claims.len();
    let seg_len_sum: f64 = outcome
        .claims
        .iter()
        .map(|c| c.text.chars().count() as f64)
        .sum();
    let deduped = dedupe_claims(outcome.claims);
    let mut claims = deduped.claims;

    // Check-worthiness for every unique claim.
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
                        Some(&record.id),
                        Some(&claim.id),
                        "unparseable check-worthiness reply; classified as other".into(),
                    ));
                }
            }
            Err(e) => {
                claim.relevance = Some(RelevanceClass::Other);
                issues.push(issue(
                    "classify",
                    Some(&record.id),
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
                    Some(&record.id),
                    Some(&claims[i].id),
                    e.to_string(),
                )),
            }
        }

        let to_enrich: Vec<usize> = factual
            .into_iter()
            .filter(|&i| claims[i].independence == Some(Independence::NotIndependent))
            .collect();
        let enriched = executor.map_ordered(&to_enrich, |&i| {
            enrich_claim(
                &record.question,
                &record.answer,
                &claims[i],
                backends.chat.as_ref(),
                model,
            )
        });
        for (&i, result) in to_enrich.iter().zip(enriched) {
            match result {
                Ok((claim, outcome)) => {
                    enrichment.push(outcome);
                    claims.push(claim);
                }
                Err(e) => issues.push(issue(
                    "enrich",
                    Some(&record.id),
                    Some(&claims[i].id),
                    e.to_string(),
                )),
            }
        }
    }

    PhaseA {
        report: RecordReport {
            record_id: record.id.clone(),
            sentence_count,
            total_segmented,
            duplicates_removed: deduped.duplicates_removed,
            claims,
            enrichment,
            evidence: Vec::new(),
            attributions: Vec::new(),
        },
        issues,
        seg_len_sum,
    }
}

/// Indices (into `report.claims`) of the claims that enter retrieval:
/// factual claims, with enriched versions replacing their parents.
fn retrieval_set(report: &RecordReport) -> Vec<usize> {
    let enriched_parents: Vec<&str> = report
        .claims
        .iter()
        .filter_map(|c| c.parent_claim_id.as_deref())
        .collect();
    report
        .claims
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            c.relevance == Some(RelevanceClass::FactualClaim)
                && !enriched_parents.contains(&c.id.as_str())
        })
        .map(|(i, _)| i)
        .collect()
}

/// Retrieval and attribution for one record's eligible claims.
fn phase_b(
    record: &QARecord,
    report: &mut RecordReport,
    eligible: &[usize],
    config: &RunConfig,
    backends: &BackendSet,
    executor: &Executor,
) -> Vec<RunIssue> {
    let mut issues = Vec::new();
    if eligible.is_empty() {
        return issues;
    }
    let claims: Vec<&Claim> = eligible.iter().map(|&i| &report.claims[i]).collect();

    let pool = match build_question_pool(&record.id, &claims, &config.retrieval, backends, executor)
    {
        Ok(pool) => pool,
        Err(e) => {
            issues.push(issue("search", Some(&record.id), None, e.to_string()));
            // Nothing retrievable: every eligible claim is missing.
            for claim in &claims {
                report.attributions.push(
                    aggregate_claim(&claim.id, &[]).expect("empty aggregation cannot fail"),
                );
            }
            return issues;
        }
    };
    for failure in &pool.failures {
        issues.push(RunIssue {
            stage: "fetch".into(),
            record_id: Some(record.id.clone()),
            claim_id: None,
            url: Some(failure.url.clone()),
            message: failure.error.clone(),
        });
    }

    struct ClaimResult {
        evidence: Vec<EvidenceRow>,
        attribution: Option<ClaimAttribution>,
        issues: Vec<RunIssue>,
    }

    let results: Vec<ClaimResult> = executor.map_ordered(&claims, |claim| {
        let mut result = ClaimResult {
            evidence: Vec::new(),
            attribution: None,
            issues: Vec::new(),
        };
        let scored = match retrieve_evidence(claim, &pool, &config.retrieval, backends) {
            Ok(scored) => scored,
            Err(e) => {
                result.issues.push(issue(
                    "retrieve",
                    Some(&record.id),
                    Some(&claim.id),
                    e.to_string(),
                ));
                return result;
            }
        };
        let mut verdicts: Vec<PairVerdict> = Vec::with_capacity(scored.len());
        for sc in &scored {
            result.evidence.push(EvidenceRow {
                claim_id: claim.id.clone(),
                chunk_id: sc.chunk.id.clone(),
                url: sc.chunk.url.clone(),
                chunk_index: sc.chunk.chunk_index,
                window: sc.chunk.window_size,
                text: sc.chunk.text.clone(),
                score: sc.score,
            });
            match relate_pair(
                claim,
                &sc.chunk,
                Some(sc.score),
                &record.question,
                config.attribution_method,
                backends,
                &config.backends.chat_model,
            ) {
                Ok(verdict) => verdicts.push(verdict),
                Err(e) => {
                    result.issues.push(issue(
                        "relate",
                        Some(&record.id),
                        Some(&claim.id),
                        e.to_string(),
                    ));
                    // A claim with retrieved chunks but no classifiable
                    // pair cannot honestly be labeled, so it is excluded
                    // rather than reported as missing.
                    return result;
                }
            }
        }
        result.attribution = Some(
            aggregate_claim(&claim.id, &verdicts).expect("verdicts built for this claim"),
        );
        result
    });

    for result in results {
        report.evidence.extend(result.evidence);
        if let Some(attribution) = result.attribution {
            report.attributions.push(attribution);
        }
        issues.extend(result.issues);
    }
    issues
}

/// Runs the whole pipeline against an explicit backend set. This is the
/// entry point tests and benchmarks use with mock backends; `run_phr`
/// builds the configured HTTP backends first.
pub fn run_phr_with(config: &RunConfig, backends: &BackendSet) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let all_records = load_corpus(&config.corpus)?;
    let corpus_fp = corpus_fingerprint(&all_records);

    let records: Vec<QARecord> = match config.max_records {
        Some(cap) => sample_indices(all_records.len(), cap, config.seed, 0)
            .into_iter()
            .map(|i| all_records[i].clone())
            .collect(),
        None => all_records,
    };

    let executor = Executor::new(if config.fanout <= 1 {
        Parallelism::Sequential
    } else {
        Parallelism::Threads(config.fanout)
    });

    // Phase A: segment, dedup, classify, enrich (per record, fanned out).
    let mut phase_a_results: Vec<PhaseA> =
        executor.map_ordered(&records, |record| phase_a(record, config, backends, &executor));

    // Global claim budget over the retrieval sets, in (record, claim) order.
    let mut eligible: Vec<Vec<usize>> = phase_a_results
        .iter()
        .map(|p| retrieval_set(&p.report))
        .collect();
    if let Some(cap) = config.max_claims {
        let flat: Vec<(usize, usize)> = eligible
            .iter()
            .enumerate()
            .flat_map(|(r, set)| set.iter().map(move |&c| (r, c)))
            .collect();
        if flat.len() > cap {
            let keep = sample_indices(flat.len(), cap, config.seed, 1);
            let mut kept: Vec<Vec<usize>> = vec![Vec::new(); eligible.len()];
            for k in keep {
                let (r, c) = flat[k];
                kept[r].push(c);
            }
            eligible = kept;
        }
    }

    // Phase B: retrieve and relate (per record, fanned out).
    let phase_b_issues: Vec<Vec<RunIssue>> = {
        let jobs: Vec<(usize, &QARecord)> = records.iter().enumerate().collect();
        let reports: Vec<(RecordReport, Vec<RunIssue>)> = executor.map_ordered(&jobs, |(i, record)| {
            let mut report = phase_a_results[*i].report.clone();
            let issues = phase_b(record, &mut report, &eligible[*i], config, backends, &executor);
            (report, issues)
        });
        let mut all_issues = Vec::with_capacity(reports.len());
        for (i, (report, issues)) in reports.into_iter().enumerate() {
            phase_a_results[i].report = report;
            all_issues.push(issues);
        }
        all_issues
    };

    // Deterministic reduction in record order.
    let mut errors: Vec<RunIssue> = Vec::new();
    let mut record_reports: Vec<RecordReport> = Vec::with_capacity(phase_a_results.len());
    let mut total_claims = 0usize;
    let mut unique_claims = 0usize;
    let mut len_sum = 0.0f64;
    let mut sentence_count = 0usize;
    let mut relevance_counts: BTreeMap<RelevanceClass, usize> =
        RelevanceClass::ALL.iter().map(|&c| (c, 0)).collect();
    let mut enrichment_outcomes = Vec::new();
    let mut all_pairs: Vec<PairVerdict> = Vec::new();
    let mut all_attributions: Vec<ClaimAttribution> = Vec::new();

    for (phase, b_issues) in phase_a_results.into_iter().zip(phase_b_issues) {
        let report = phase.report;
        total_claims += report.total_segmented;
        len_sum += phase.seg_len_sum;
        sentence_count += report.sentence_count;
        let segmented: Vec<&Claim> = report
            .claims
            .iter()
            .filter(|c| c.origin != ClaimOrigin::Enriched)
            .collect();
        unique_claims += segmented.len();
        for claim in &segmented {
            if let Some(class) = claim.relevance {
                *relevance_counts.get_mut(&class).expect("all classes") += 1;
            }
        }
        enrichment_outcomes.extend(report.enrichment.iter().cloned());
        for attribution in &report.attributions {
            all_pairs.extend(attribution.pair_verdicts.iter().cloned());
        }
        all_attributions.extend(report.attributions.iter().cloned());
        errors.extend(phase.issues);
        errors.extend(b_issues);
        record_reports.push(report);
    }

    let mut seg_stats = BTreeMap::new();
    if sentence_count > 0 {
        let avg = if total_claims == 0 {
            0.0
        } else {
            len_sum / total_claims as f64
        };
        seg_stats.insert(
            config.strategy.as_str().to_string(),
            SegStats {
                total_claims,
                unique_claims,
                avg_len_chars: avg,
                claims_per_sentence: total_claims as f64 / sentence_count as f64,
            },
        );
    }

    let report = RunReport {
        run_id: run_id(config, &corpus_fp),
        config: config.clone(),
        corpus_fingerprint: corpus_fp,
        record_count: records.len(),
        seg_stats,
        relevance: RelevanceDistribution {
            unique_claims,
            counts: relevance_counts,
        },
        enrichment_effect: enrichment_effect(&enrichment_outcomes).ok(),
        pair_distribution: RelationDistribution::from_pairs(&all_pairs).ok(),
        claim_distribution: RelationDistribution::from_claims(&all_attributions).ok(),
        records: record_reports,
        errors,
    };
    debug_assert_eq!(
        report.relevance.unique_claims,
        report.relevance.counts.values().sum::<usize>(),
        "every unique claim carries exactly one relevance class"
    );
    Ok(report)
}

/// Builds the configured backends and runs the pipeline.
pub fn run_phr(config: &RunConfig) -> Result<RunReport, PipelineError> {
    let backends = build_backends(config)?;
    run_phr_with(config, &backends)
}

/// Side-by-side comparison of two runs over the same corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub run_a: String,
    pub run_b: String,
    pub corpus_fingerprint: String,
    pub seg_stats_a: BTreeMap<String, SegStats>,
    pub seg_stats_b: BTreeMap<String, SegStats>,
    pub relevance_a: RelevanceDistribution,
    pub relevance_b: RelevanceDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrichment_a: Option<crate::analysis::EnrichmentEffect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrichment_b: Option<crate::analysis::EnrichmentEffect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_distribution_a: Option<RelationDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_distribution_b: Option<RelationDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_distribution_a: Option<RelationDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_distribution_b: Option<RelationDistribution>,
    /// (a.no_relation - b.no_relation) in percentage points, per granularity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_no_relation_reduction_pp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_no_relation_reduction_pp: Option<f64>,
}

pub fn compare_runs(a: &RunReport, b: &RunReport) -> Result<ComparisonReport, PipelineError> {
    if a.corpus_fingerprint != b.corpus_fingerprint {
        return Err(PipelineError::CorpusMismatch(
            a.corpus_fingerprint.clone(),
            b.corpus_fingerprint.clone(),
        ));
    }
    let pair_reduction = match (&a.pair_distribution, &b.pair_distribution) {
        (Some(da), Some(db)) => Some(
            no_relation_reduction(da, db)
                .map_err(|e| PipelineError::Config(e.to_string()))?,
        ),
        _ => None,
    };
    let claim_reduction = match (&a.claim_distribution, &b.claim_distribution) {
        (Some(da), Some(db)) => Some(
            no_relation_reduction(da, db)
                .map_err(|e| PipelineError::Config(e.to_string()))?,
        ),
        _ => None,
    };
    Ok(ComparisonReport {
        run_a: a.run_id.clone(),
        run_b: b.run_id.clone(),
        corpus_fingerprint: a.corpus_fingerprint.clone(),
        seg_stats_a: a.seg_stats.clone(),
        seg_stats_b: b.seg_stats.clone(),
        relevance_a: a.relevance.clone(),
        relevance_b: b.relevance.clone(),
        enrichment_a: a.enrichment_effect.clone(),
        enrichment_b: b.enrichment_effect.clone(),
        pair_distribution_a: a.pair_distribution.clone(),
        pair_distribution_b: b.pair_distribution.clone(),
        claim_distribution_a: a.claim_distribution.clone(),
        claim_distribution_b: b.claim_distribution.clone(),
        pair_no_relation_reduction_pp: pair_reduction,
        claim_no_relation_reduction_pp: claim_reduction,
    })
}

impl ComparisonReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# Run comparison: {} vs {}\n\n",
            self.run_a, self.run_b
        ));
        out.push_str("## Segmentation\n\n");
        out.push_str(
            "| Run | Segmentation System | Number of c | Unique #c | avg. len(c) | c / Sentence |\n",
        );
        out.push_str("|---|---|---|---|---|---|\n");
        for (run, stats_map) in [("a", &self.seg_stats_a), ("b", &self.seg_stats_b)] {
            for (strategy, stats) in stats_map {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {:.1} | {:.2} |\n",
                    run,
                    strategy,
                    stats.total_claims,
                    stats.unique_claims,
                    stats.avg_len_chars,
                    stats.claims_per_sentence
                ));
            }
        }
        out.push_str("\n## Claim relevance\n\n");
        out.push_str("| Run | Unique #c | # factual | # not a claim | # opinion | # other |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for (run, rel) in [("a", &self.relevance_a), ("b", &self.relevance_b)] {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                run,
                rel.unique_claims,
                rel.count(RelevanceClass::FactualClaim),
                rel.count(RelevanceClass::NotAClaim),
                rel.count(RelevanceClass::Opinion),
                rel.count(RelevanceClass::Other),
            ));
        }
        out.push_str("\n## No-relation reduction (a -> b)\n\n");
        match self.pair_no_relation_reduction_pp {
            Some(pp) => out.push_str(&format!("- pair-level: {pp:.1} pp\n")),
            None => out.push_str("- pair-level: n/a\n"),
        }
        match self.claim_no_relation_reduction_pp {
            Some(pp) => out.push_str(&format!("- claim-level: {pp:.1} pp\n")),
            None => out.push_str("- claim-level: n/a\n"),
        }
        out
    }
}
