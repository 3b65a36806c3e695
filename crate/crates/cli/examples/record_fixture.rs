//! Materializes the built-in demo fixture for offline CLI runs: writes a
//! corpus, records the mock-backend cassettes into a cache directory, and
//! emits a ready-to-use config.
//!
//! ```text
//! cargo run -p attributor-cli --example record_fixture -- demo
//! cargo run -p attributor-cli -- run --config demo/config.json --offline --out demo/run1
//! ```

use attributor_core::backends::cache::CacheMode;
use attributor_core::pipeline::{run_phr_with, wrap_with_cache};
use attributor_core::testkit::pronoun_fixture;
use std::path::PathBuf;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("demo"));
    std::fs::create_dir_all(&dir).expect("create demo dir");

    let fixture = pronoun_fixture();
    let corpus = fixture.write_corpus(&dir).expect("write corpus");

    // Record cassettes for both pipeline variants into one cache, so
    // offline replays of either config always hit.
    let mut config = fixture.config(corpus);
    config.cache.dir = Some(dir.join("cache"));
    config.cache.mode = CacheMode::Record;
    let recording = wrap_with_cache(&config, fixture.backends.clone()).expect("cache layer");
    let mut record_count = 0;
    for enrichment in [false, true] {
        config.enrichment = enrichment;
        let report = run_phr_with(&config, &recording).expect("recording run");
        assert!(report.errors.is_empty(), "issues: {:?}", report.errors);
        record_count = report.record_count;
    }

    config.cache.mode = CacheMode::Replay;
    config.enrichment = false;
    let baseline_path = dir.join("config-baseline.json");
    std::fs::write(
        &baseline_path,
        serde_json::to_string_pretty(&config).expect("config serializes"),
    )
    .expect("write config");
    config.enrichment = true;
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(&config).expect("config serializes"),
    )
    .expect("write config");

    println!(
        "recorded {} cassette entries for {} records",
        std::fs::read_dir(dir.join("cache")).map(|d| d.count()).unwrap_or(0),
        record_count
    );
    println!("corpus:   {}", dir.join("corpus.jsonl").display());
    println!("configs:  {} (enrichment on)", config_path.display());
    println!("          {} (enrichment off)", baseline_path.display());
    println!(
        "next:     attributor run --config {} --offline --out {}",
        config_path.display(),
        dir.join("run1").display()
    );
}
