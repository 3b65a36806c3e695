//! Manual smoke test against live endpoints. Not part of CI.
//!
//! Configure the backends via environment variables, then run:
//!
//! ```text
//! ATTRIBUTOR_CHAT_URL=https://api.openai.com/v1 \
//! ATTRIBUTOR_CHAT_KEY=... \
//! ATTRIBUTOR_EMBED_URL=https://api.openai.com/v1 \
//! ATTRIBUTOR_EMBED_KEY=... \
//! ATTRIBUTOR_NLI_URL=http://localhost:8080/nli \
//! ATTRIBUTOR_SEARCH_URL=https://www.googleapis.com/customsearch/v1 \
//! ATTRIBUTOR_SEARCH_KEY=... \
//! cargo test -p attributor-cli --test live_smoke -- --ignored --nocapture
//! ```

use attributor_core::model::RelationLabel;
use attributor_core::pipeline::report::RunReport;
use attributor_core::pipeline::{env_vars, SegmentationStrategy};
use std::process::Command;

const CORPUS: &str = r#"{"id":"live-1","question":"What are the health benefits of regular walking?","answer":"Regular walking strengthens the heart and lowers blood pressure. It can reduce the risk of type 2 diabetes. Walking also improves mood through the release of endorphins."}
{"id":"live-2","question":"How do vaccines create immunity?","answer":"Vaccines expose the immune system to a harmless form of a pathogen. The body produces antibodies in response. Memory cells then allow a faster response to future infections."}
{"id":"live-3","question":"Why is the sky blue?","answer":"Sunlight is scattered by molecules in the atmosphere. Blue light scatters more than red because of its shorter wavelength. This effect is called Rayleigh scattering."}
"#;

#[test]
#[ignore = "requires live chat, embedding, NLI, and search endpoints"]
fn live_run_attributes_three_records() {
    for var in [env_vars::CHAT_URL, env_vars::EMBED_URL, env_vars::NLI_URL, env_vars::SEARCH_URL] {
        assert!(
            std::env::var(var).map(|v| !v.is_empty()).unwrap_or(false),
            "{var} must be set for the live smoke test"
        );
    }

    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(&corpus, CORPUS).unwrap();

    let mut config = attributor_core::pipeline::RunConfig {
        corpus,
        strategy: SegmentationStrategy::DirectWithContext,
        enrichment: false,
        ..Default::default()
    };
    config.cache.dir = Some(dir.path().join("cache"));
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let out = dir.path().join("run");
    let output = Command::new(env!("CARGO_BIN_EXE_attributor"))
        .args(["run", "--config"])
        .arg(&config_path)
        .args(["--record", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "live run failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    for artifact in ["report.json", "claims.jsonl", "evidence.jsonl", "attribution.jsonl"] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }
    let report =
        RunReport::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.record_count, 3);
    let evidence_rows: usize = report.records.iter().map(|r| r.evidence.len()).sum();
    assert!(evidence_rows > 0, "no evidence retrieved");
    let entailed = report
        .claim_distribution
        .as_ref()
        .map(|d| d.count(RelationLabel::Entailed))
        .unwrap_or(0);
    assert!(entailed >= 1, "expected at least one entailed claim");
    println!(
        "live smoke: {} evidence rows, {} entailed claims, {} issues",
        evidence_rows,
        entailed,
        report.errors.len()
    );
}
