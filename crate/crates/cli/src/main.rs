//! `attributor` — command-line surface of the answer-attribution pipeline.
//!
//! Exit codes: 0 success, 1 fatal config/backend error, 2 corpus error.

use attributor_core::backends::cache::CacheMode;
use attributor_core::pipeline::report::{
    read_claims_jsonl, read_evidence_jsonl, render_report, write_artifacts,
    write_attribution_jsonl, write_claims_jsonl, write_enrichment_jsonl, write_evidence_jsonl,
    ReportFormat, RunReport,
};
use attributor_core::pipeline::stages;
use attributor_core::pipeline::{
    build_backends, compare_runs, run_phr_with, PipelineError, RunConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "attributor", version, about = "Post-hoc answer attribution pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOverrides {
    /// Replay from the cache only; any upstream call is an error.
    #[arg(long, conflicts_with = "record")]
    offline: bool,
    /// Read through the cache and record misses (the default mode).
    #[arg(long)]
    record: bool,
    /// Process at most N corpus records (seeded sample).
    #[arg(long, value_name = "N")]
    max_records: Option<usize>,
    /// Seed for record/claim sampling.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
}

impl RunOverrides {
    fn apply(&self, config: &mut RunConfig) {
        if self.offline {
            config.cache.mode = CacheMode::Replay;
        } else if self.record {
            config.cache.mode = CacheMode::Record;
        }
        if let Some(n) = self.max_records {
            config.max_records = Some(n);
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write the report plus stage artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Compare two run reports over the same corpus.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Also write the comparison as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a stored run report.
    Render {
        /// Run directory or report.json path.
        run: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
        /// Output directory (defaults to the run's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment the corpus into claims.jsonl.
    Segment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Label claims.jsonl with check-worthiness (and independence +
    /// enrichment when enabled in the config).
    Classify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Retrieve evidence.jsonl for labeled claims.
    Retrieve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Classify claim-evidence pairs into attribution.jsonl.
    Relate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        evidence: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Md,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> ReportFormat {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Md => ReportFormat::Markdown,
        }
    }
}

fn load_config(path: &Path, overrides: &RunOverrides) -> Result<RunConfig, PipelineError> {
    let mut config = RunConfig::load(path)?;
    overrides.apply(&mut config);
    Ok(config)
}

fn read_report(path: &Path) -> Result<RunReport, PipelineError> {
    let file = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file).map_err(|e| PipelineError::Io {
        path: file.display().to_string(),
        detail: e.to_string(),
    })?;
    RunReport::from_json(&text)
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io {
        path: dir.display().to_string(),
        detail: e.to_string(),
    })
}

fn issues_summary(issues: &[attributor_core::pipeline::report::RunIssue]) {
    if !issues.is_empty() {
        eprintln!("{} issue(s) recorded:", issues.len());
        for issue in issues.iter().take(10) {
            eprintln!("  [{}] {}", issue.stage, issue.message);
        }
        if issues.len() > 10 {
            eprintln!("  ... and {} more", issues.len() - 10);
        }
    }
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run {
            config,
            out,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let backends = build_backends(&config)?;
            let report = run_phr_with(&config, &backends)?;
            ensure_dir(&out)?;
            render_report(&report, ReportFormat::Json, &out)?;
            render_report(&report, ReportFormat::Markdown, &out)?;
            render_report(&report, ReportFormat::Csv, &out)?;
            write_artifacts(&report, &out)?;
            issues_summary(&report.errors);
            println!(
                "run {} complete: {} records, {} claims, report at {}",
                report.run_id,
                report.record_count,
                report.relevance.unique_claims,
                out.join("report.json").display()
            );
        }
        Command::Compare { run_a, run_b, out } => {
            let a = read_report(&run_a)?;
            let b = read_report(&run_b)?;
            let comparison = compare_runs(&a, &b)?;
            print!("{}", comparison.to_markdown());
            if let Some(out) = out {
                if let Some(parent) = out.parent() {
                    if !parent.as_os_str().is_empty() {
                        ensure_dir(parent)?;
                    }
                }
                let json = serde_json::to_string_pretty(&comparison)
                    .map_err(|e| PipelineError::Config(format!("comparison serialize: {e}")))?;
                std::fs::write(&out, json + "\n").map_err(|e| PipelineError::Io {
                    path: out.display().to_string(),
                    detail: e.to_string(),
                })?;
            }
        }
        Command::Render { run, format, out } => {
            let report = read_report(&run)?;
            let out_dir = out.unwrap_or_else(|| {
                if run.is_dir() {
                    run.clone()
                } else {
                    run.parent().map(Path::to_path_buf).unwrap_or_default()
                }
            });
            ensure_dir(&out_dir)?;
            let files = render_report(&report, format.into(), &out_dir)?;
            for file in files {
                println!("{}", file.display());
            }
        }
        Command::Segment {
            config,
            out,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let backends = build_backends(&config)?;
            let output = stages::segment_stage(&config, &backends)?;
            ensure_dir(&out)?;
            write_claims_jsonl(&out.join("claims.jsonl"), &output.claims)?;
            issues_summary(&output.issues);
            println!(
                "{} claims -> {}",
                output.claims.len(),
                out.join("claims.jsonl").display()
            );
        }
        Command::Classify {
            config,
            claims,
            out,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let backends = build_backends(&config)?;
            let input = read_claims_jsonl(&claims)?;
            let output = stages::classify_stage(&config, &backends, input)?;
            ensure_dir(&out)?;
            write_claims_jsonl(&out.join("claims.jsonl"), &output.claims)?;
            write_enrichment_jsonl(&out.join("enrichment.jsonl"), &output.enrichment)?;
            issues_summary(&output.issues);
            println!(
                "{} claims labeled, {} enriched -> {}",
                output.claims.len(),
                output.enrichment.len(),
                out.join("claims.jsonl").display()
            );
        }
        Command::Retrieve {
            config,
            claims,
            out,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let backends = build_backends(&config)?;
            let input = read_claims_jsonl(&claims)?;
            let (rows, issues) = stages::retrieve_stage(&config, &backends, &input)?;
            ensure_dir(&out)?;
            write_evidence_jsonl(&out.join("evidence.jsonl"), &rows)?;
            issues_summary(&issues);
            println!(
                "{} evidence rows -> {}",
                rows.len(),
                out.join("evidence.jsonl").display()
            );
        }
        Command::Relate {
            config,
            claims,
            evidence,
            out,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let backends = build_backends(&config)?;
            let input = read_claims_jsonl(&claims)?;
            let rows = read_evidence_jsonl(&evidence)?;
            let (attributions, issues) = stages::relate_stage(&config, &backends, &input, &rows)?;
            ensure_dir(&out)?;
            write_attribution_jsonl(&out.join("attribution.jsonl"), &attributions)?;
            issues_summary(&issues);
            println!(
                "{} claims attributed -> {}",
                attributions.len(),
                out.join("attribution.jsonl").display()
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = execute(cli) {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
