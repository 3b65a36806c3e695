//! Run reports, table rendering, and intermediate artifacts.
//!
//! `report.json` is the canonical lossless serialization; CSV emits one
//! file per table; markdown mirrors the summary tables' column structure.
//! Pipeline stages persist their outputs as line-delimited JSON artifacts
//! so later stages can be re-run without repeating expensive calls.

use super::{PipelineError, RunConfig};
use crate::analysis::{EnrichmentEffect, EnrichmentOutcome};
use crate::attribution::{ClaimAttribution, Granularity, RelationDistribution};
use crate::model::{Claim, RelationLabel, RelevanceClass};
use crate::segmentation::SegStats;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Unique-claim relevance counts, one class per unique claim.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelevanceDistribution {
    pub unique_claims: usize,
    pub counts: BTreeMap<RelevanceClass, usize>,
}

impl RelevanceDistribution {
    pub fn count(&self, class: RelevanceClass) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }
}

/// One retrieved chunk for one claim, as persisted to `evidence.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub claim_id: String,
    pub chunk_id: String,
    pub url: String,
    pub chunk_index: usize,
    pub window: usize,
    pub text: String,
    pub score: f32,
}

/// A recoverable problem logged during a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunIssue {
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub message: String,
}

/// Everything the pipeline produced for one record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordReport {
    pub record_id: String,
    pub sentence_count: usize,
    /// Claims produced by segmentation before duplicate removal.
    pub total_segmented: usize,
    pub duplicates_removed: usize,
    /// Deduplicated claims with labels; enriched claims follow their parents.
    pub claims: Vec<Claim>,
    pub enrichment: Vec<EnrichmentOutcome>,
    pub evidence: Vec<EvidenceRow>,
    pub attributions: Vec<ClaimAttribution>,
}

/// The complete output of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub config: RunConfig,
    pub corpus_fingerprint: String,
    pub record_count: usize,
    /// Corpus-level segmentation statistics keyed by strategy name.
    pub seg_stats: BTreeMap<String, SegStats>,
    pub relevance: RelevanceDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrichment_effect: Option<EnrichmentEffect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_distribution: Option<RelationDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_distribution: Option<RelationDistribution>,
    pub records: Vec<RecordReport>,
    pub errors: Vec<RunIssue>,
}

impl RunReport {
    /// Canonical serialization: pretty JSON with a trailing newline, struct
    /// field order, sorted maps, no timestamps. Replays are byte-identical.
    pub fn to_canonical_json(&self) -> Result<String, PipelineError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| PipelineError::Config(format!("report serialization: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text)
            .map_err(|e| PipelineError::Config(format!("report parse: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::Io {
            path: parent.display().to_string(),
            detail: e.to_string(),
        })?;
    }
    std::fs::write(path, contents).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Renders the report in the requested format under `out_dir`, returning
/// the files written.
pub fn render_report(
    report: &RunReport,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    match format {
        ReportFormat::Json => {
            let path = out_dir.join("report.json");
            write_file(&path, &report.to_canonical_json()?)?;
            Ok(vec![path])
        }
        ReportFormat::Markdown => {
            let path = out_dir.join("report.md");
            write_file(&path, &render_markdown(report))?;
            Ok(vec![path])
        }
        ReportFormat::Csv => render_csv(report, &out_dir.join("tables")),
    }
}

/// Markdown summary mirroring the segmentation, relevance, and relation
/// table layouts.
pub fn render_markdown(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Attribution run {}\n\n", report.run_id));
    out.push_str(&format!(
        "records: {} | corpus: {}\n\n",
        report.record_count, report.corpus_fingerprint
    ));

    out.push_str("## Segmentation\n\n");
    out.push_str("| Segmentation System | Number of c | Unique #c | avg. len(c) | c / Sentence |\n");
    out.push_str("|---|---|---|---|---|\n");
    for (strategy, stats) in &report.seg_stats {
        out.push_str(&format!(
            "| {} | {} | {} | {:.1} | {:.2} |\n",
            strategy,
            stats.total_claims,
            stats.unique_claims,
            stats.avg_len_chars,
            stats.claims_per_sentence
        ));
    }

    out.push_str("\n## Claim relevance\n\n");
    out.push_str("| Segmentation System | Unique #c | # factual | # not a claim | # opinion | # other |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    let strategy = report
        .seg_stats
        .keys()
        .next()
        .cloned()
        .unwrap_or_else(|| "-".into());
    out.push_str(&format!(
        "| {} | {} | {} | {} | {} | {} |\n",
        strategy,
        report.relevance.unique_claims,
        report.relevance.count(RelevanceClass::FactualClaim),
        report.relevance.count(RelevanceClass::NotAClaim),
        report.relevance.count(RelevanceClass::Opinion),
        report.relevance.count(RelevanceClass::Other),
    ));

    out.push_str("\n## Claim-evidence relations\n\n");
    out.push_str("| Verdicts | Contradiction | Entailment | Missing | No Relation |\n");
    out.push_str("|---|---|---|---|---|\n");
    for dist in [&report.pair_distribution, &report.claim_distribution]
        .into_iter()
        .flatten()
    {
        let name = match dist.granularity {
            Granularity::Pair => "pair-level",
            Granularity::Claim => "claim-level",
        };
        out.push_str(&format!(
            "| {} | {:.1}% | {:.1}% | {:.1}% | {:.1}% |\n",
            name,
            dist.share(RelationLabel::Contradicted) * 100.0,
            dist.share(RelationLabel::Entailed) * 100.0,
            dist.share(RelationLabel::Missing) * 100.0,
            dist.share(RelationLabel::NoRelation) * 100.0,
        ));
    }

    if let Some(effect) = &report.enrichment_effect {
        out.push_str("\n## Enrichment\n\n");
        out.push_str(&format!(
            "- attempts: {} | resolved: {} ({:.1}%)\n",
            effect.total,
            effect.resolved,
            effect.resolution_rate * 100.0
        ));
        out.push_str(&format!(
            "- mean claim length: {:.1} -> {:.1} chars\n",
            effect.mean_before_len, effect.mean_after_len
        ));
    }

    if !report.errors.is_empty() {
        out.push_str(&format!("\n## Errors ({})\n\n", report.errors.len()));
        for issue in &report.errors {
            out.push_str(&format!(
                "- [{}] {}{}\n",
                issue.stage,
                issue
                    .record_id
                    .as_deref()
                    .map(|r| format!("{r}: "))
                    .unwrap_or_default(),
                issue.message
            ));
        }
    }
    out
}

fn render_csv(report: &RunReport, tables_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(tables_dir).map_err(|e| PipelineError::Io {
        path: tables_dir.display().to_string(),
        detail: e.to_string(),
    })?;
    let csv_err = |path: &Path, e: csv::Error| PipelineError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    };
    let mut written = Vec::new();

    let seg_path = tables_dir.join("segmentation.csv");
    {
        let mut w = csv::Writer::from_path(&seg_path).map_err(|e| csv_err(&seg_path, e))?;
        w.write_record([
            "strategy",
            "total_claims",
            "unique_claims",
            "avg_len_chars",
            "claims_per_sentence",
        ])
        .map_err(|e| csv_err(&seg_path, e))?;
        for (strategy, stats) in &report.seg_stats {
            w.write_record([
                strategy.as_str(),
                &stats.total_claims.to_string(),
                &stats.unique_claims.to_string(),
                &format!("{:.4}", stats.avg_len_chars),
                &format!("{:.4}", stats.claims_per_sentence),
            ])
            .map_err(|e| csv_err(&seg_path, e))?;
        }
        w.flush().map_err(|e| PipelineError::Io {
            path: seg_path.display().to_string(),
            detail: e.to_string(),
        })?;
    }
    written.push(seg_path);

    let rel_path = tables_dir.join("relevance.csv");
    {
        let mut w = csv::Writer::from_path(&rel_path).map_err(|e| csv_err(&rel_path, e))?;
        w.write_record([
            "unique_claims",
            "factual",
            "not_a_claim",
            "opinion",
            "other",
        ])
        .map_err(|e| csv_err(&rel_path, e))?;
        w.write_record([
            report.relevance.unique_claims.to_string(),
            report.relevance.count(RelevanceClass::FactualClaim).to_string(),
            report.relevance.count(RelevanceClass::NotAClaim).to_string(),
            report.relevance.count(RelevanceClass::Opinion).to_string(),
            report.relevance.count(RelevanceClass::Other).to_string(),
        ])
        .map_err(|e| csv_err(&rel_path, e))?;
        w.flush().map_err(|e| PipelineError::Io {
            path: rel_path.display().to_string(),
            detail: e.to_string(),
        })?;
    }
    written.push(rel_path);

    let relations_path = tables_dir.join("relations.csv");
    {
        let mut w =
            csv::Writer::from_path(&relations_path).map_err(|e| csv_err(&relations_path, e))?;
        w.write_record(["granularity", "relation", "count", "share"])
            .map_err(|e| csv_err(&relations_path, e))?;
        for dist in [&report.pair_distribution, &report.claim_distribution]
            .into_iter()
            .flatten()
        {
            let name = match dist.granularity {
                Granularity::Pair => "pair",
                Granularity::Claim => "claim",
            };
            for label in RelationLabel::ALL {
                w.write_record([
                    name,
                    label.as_str(),
                    &dist.count(label).to_string(),
                    &format!("{:.6}", dist.share(label)),
                ])
                .map_err(|e| csv_err(&relations_path, e))?;
            }
        }
        w.flush().map_err(|e| PipelineError::Io {
            path: relations_path.display().to_string(),
            detail: e.to_string(),
        })?;
    }
    written.push(relations_path);

    let enrich_path = tables_dir.join("enrichment.csv");
    {
        let mut w = csv::Writer::from_path(&enrich_path).map_err(|e| csv_err(&enrich_path, e))?;
        w.write_record([
            "total",
            "resolved",
            "resolution_rate",
            "mean_before_len",
            "mean_after_len",
        ])
        .map_err(|e| csv_err(&enrich_path, e))?;
        if let Some(effect) = &report.enrichment_effect {
            w.write_record([
                effect.total.to_string(),
                effect.resolved.to_string(),
                format!("{:.6}", effect.resolution_rate),
                format!("{:.4}", effect.mean_before_len),
                format!("{:.4}", effect.mean_after_len),
            ])
            .map_err(|e| csv_err(&enrich_path, e))?;
        }
        w.flush().map_err(|e| PipelineError::Io {
            path: enrich_path.display().to_string(),
            detail: e.to_string(),
        })?;
    }
    written.push(enrich_path);

    Ok(written)
}

/// `claims.jsonl` row: the claim fields plus the labels appended by
/// classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRow {
    pub id: String,
    pub record_id: String,
    pub text: String,
    pub origin: crate::model::ClaimOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_claim_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<RelevanceClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub independence: Option<crate::model::Independence>,
}

impl ClaimRow {
    pub fn from_claim(c: &Claim) -> Self {
        ClaimRow {
            id: c.id.clone(),
            record_id: c.record_id.clone(),
            text: c.text.clone(),
            origin: c.origin,
            parent_claim_id: c.parent_claim_id.clone(),
            relevance: c.relevance,
            independence: c.independence,
        }
    }

    pub fn into_claim(self) -> Result<Claim, PipelineError> {
        let mut claim = Claim::new(
            self.id,
            self.record_id,
            self.text,
            self.origin,
            self.parent_claim_id,
        )
        .map_err(|e| PipelineError::Config(format!("claims.jsonl: {e}")))?;
        claim.relevance = self.relevance;
        claim.independence = self.independence;
        Ok(claim)
    }
}

/// `attribution.jsonl` row: one classified (claim, chunk) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRow {
    pub claim_id: String,
    pub chunk_id: String,
    pub relation: RelationLabel,
    pub method: crate::attribution::Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f32>,
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    rows: impl Iterator<Item = T>,
) -> Result<(), PipelineError> {
    let io_err = |e: std::io::Error| PipelineError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(&row).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (offset, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(line).map_err(|e| PipelineError::Config(format!(
                "{} line {}: {e}",
                path.display(),
                offset + 1
            )))?,
        );
    }
    Ok(rows)
}

pub fn write_claims_jsonl(path: &Path, claims: &[Claim]) -> Result<(), PipelineError> {
    write_jsonl(path, claims.iter().map(ClaimRow::from_claim))
}

pub fn read_claims_jsonl(path: &Path) -> Result<Vec<Claim>, PipelineError> {
    read_jsonl::<ClaimRow>(path)?
        .into_iter()
        .map(ClaimRow::into_claim)
        .collect()
}

pub fn write_enrichment_jsonl(
    path: &Path,
    outcomes: &[EnrichmentOutcome],
) -> Result<(), PipelineError> {
    write_jsonl(path, outcomes.iter())
}

pub fn write_evidence_jsonl(path: &Path, rows: &[EvidenceRow]) -> Result<(), PipelineError> {
    write_jsonl(path, rows.iter())
}

pub fn read_evidence_jsonl(path: &Path) -> Result<Vec<EvidenceRow>, PipelineError> {
    read_jsonl(path)
}

pub fn write_attribution_jsonl(
    path: &Path,
    attributions: &[ClaimAttribution],
) -> Result<(), PipelineError> {
    write_jsonl(
        path,
        attributions.iter().flat_map(|a| {
            a.pair_verdicts.iter().map(|p| AttributionRow {
                claim_id: p.claim_id.clone(),
                chunk_id: p.chunk_id.clone(),
                relation: p.relation.label,
                method: p.method,
                score: p.relation.score,
            })
        }),
    )
}

/// Persists the stage artifacts: `claims.jsonl`, `enrichment.jsonl`,
/// `evidence.jsonl`, and `attribution.jsonl`.
pub fn write_artifacts(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::Io {
        path: out_dir.display().to_string(),
        detail: e.to_string(),
    })?;
    let all_claims: Vec<Claim> = report
        .records
        .iter()
        .flat_map(|r| r.claims.iter().cloned())
        .collect();
    let all_enrichment: Vec<EnrichmentOutcome> = report
        .records
        .iter()
        .flat_map(|r| r.enrichment.iter().cloned())
        .collect();
    let all_evidence: Vec<EvidenceRow> = report
        .records
        .iter()
        .flat_map(|r| r.evidence.iter().cloned())
        .collect();
    let all_attributions: Vec<ClaimAttribution> = report
        .records
        .iter()
        .flat_map(|r| r.attributions.iter().cloned())
        .collect();

    let claims = out_dir.join("claims.jsonl");
    write_claims_jsonl(&claims, &all_claims)?;
    let enrichment = out_dir.join("enrichment.jsonl");
    write_enrichment_jsonl(&enrichment, &all_enrichment)?;
    let evidence = out_dir.join("evidence.jsonl");
    write_evidence_jsonl(&evidence, &all_evidence)?;
    let attribution = out_dir.join("attribution.jsonl");
    write_attribution_jsonl(&attribution, &all_attributions)?;

    Ok(vec![claims, enrichment, evidence, attribution])
}
