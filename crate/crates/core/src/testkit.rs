//! Deterministic fixtures for tests and benchmarks.
//!
//! [`pronoun_fixture`] wires a small corpus to fully-mapped mock backends:
//! sentence claims with pronoun antecedents, an enrichment path that
//! substitutes them, search hits onto fixture pages, and the substring NLI
//! rule. Runs over it are pure functions of the fixture, so recorded
//! cassettes and replays are byte-stable.

use crate::backends::mock::{MockChat, MockEmbed, MockFetcher, MockNli, MockSearch};
use crate::backends::{BackendSet, SearchHit};
use crate::model::QARecord;
use crate::pipeline::{RunConfig, SegmentationStrategy};
use crate::prompts;
use std::path::{Path, PathBuf};
use std::sync::Arc;

const CHAT_MODEL: &str = "mock-chat";

pub struct Fixture {
    pub records: Vec<QARecord>,
    pub backends: BackendSet,
}

impl Fixture {
    /// Writes the corpus as line-delimited JSON and returns its path.
    pub fn write_corpus(&self, dir: &Path) -> std::io::Result<PathBuf> {
        self.write_scaled_corpus(dir, 1)
    }

    /// Writes the corpus repeated `copies` times under fresh record ids.
    /// The mock mappings are keyed by prompt text, so they cover every
    /// copy; useful for scaling benchmarks.
    pub fn write_scaled_corpus(&self, dir: &Path, copies: usize) -> std::io::Result<PathBuf> {
        let path = dir.join("corpus.jsonl");
        let mut lines = String::new();
        for copy in 0..copies {
            for record in &self.records {
                let mut record = record.clone();
                if copy > 0 {
                    record.id = format!("{}-{copy:03}", record.id);
                }
                lines.push_str(&serde_json::to_string(&record).expect("record serializes"));
                lines.push('\n');
            }
        }
        std::fs::write(&path, lines)?;
        Ok(path)
    }

    /// Baseline config for this fixture: sentence segmentation, encoder
    /// NLI, default retrieval knobs.
    pub fn config(&self, corpus: PathBuf) -> RunConfig {
        let mut config = RunConfig {
            corpus,
            strategy: SegmentationStrategy::Sentence,
            ..Default::default()
        };
        config.backends.chat_model = CHAT_MODEL.into();
        config
    }
}

struct FixtureBuilder {
    records: Vec<QARecord>,
    chat: MockChat,
    search: MockSearch,
    fetcher: MockFetcher,
}

impl FixtureBuilder {
    fn new() -> Self {
        FixtureBuilder {
            records: Vec::new(),
            chat: MockChat::new(),
            search: MockSearch::new(),
            fetcher: MockFetcher::new(),
        }
    }

    fn record(&mut self, id: &str, question: &str, answer: &str) {
        self.records
            .push(QARecord::new(id, question, answer).expect("fixture record is valid"));
    }

    fn checkworthy(&mut self, claim: &str, code: u8) {
        self.chat
            .insert(prompts::render_checkworthiness(claim), code.to_string());
    }

    fn independence(&mut self, claim: &str, verdict: &str) {
        self.chat
            .insert(prompts::render_independence(claim), verdict.to_string());
    }

    fn enrich(&mut self, question: &str, answer: &str, claim: &str, revised: &str) {
        self.chat
            .insert(prompts::render_enrichment(question, answer, claim), revised);
    }

    fn hits(&mut self, query: &str, urls: &[&str]) {
        let hits = urls
            .iter()
            .enumerate()
            .map(|(i, url)| SearchHit::new(*url, "fixture", "", i + 1).expect("fixture url"))
            .collect();
        self.search.insert(query, hits);
    }

    fn page(&mut self, url: &str, sentences: &[&str]) {
        let body = format!(
            "<html><body>{}</body></html>",
            sentences
                .iter()
                .map(|s| format!("<p>{s}</p>"))
                .collect::<String>()
        );
        self.fetcher.insert_html(url, body);
    }

    fn build(self) -> Fixture {
        Fixture {
            records: self.records,
            backends: BackendSet {
                chat: Arc::new(self.chat),
                embed: Arc::new(MockEmbed::new(64)),
                nli: Arc::new(MockNli),
                search: Arc::new(self.search),
                fetcher: Arc::new(self.fetcher),
            },
        }
    }
}

/// Six-record corpus exercising every pipeline outcome: entailed,
/// contradicted, no-relation, and missing claims; an opinion and a
/// non-claim that check-worthiness filters out; and three pronoun claims
/// whose enrichment substitutes the antecedent, turning two of them from
/// no-relation into entailed.
pub fn pronoun_fixture() -> Fixture {
    let mut f = FixtureBuilder::new();

    // r1: heat pumps; the pronoun claim resolves and its page entails it.
    let q1 = "What are the benefits of heat pumps?";
    let a1 = "Heat pumps move heat instead of generating it. They reduce heating costs significantly.";
    let r1s0 = "Heat pumps move heat instead of generating it.";
    let r1s1 = "They reduce heating costs significantly.";
    let r1s1e = "Heat pumps reduce heating costs significantly.";
    f.record("r1", q1, a1);
    f.checkworthy(r1s0, 1);
    f.checkworthy(r1s1, 1);
    f.independence(r1s0, "independent");
    f.independence(r1s1, "not independent");
    f.independence(r1s1e, "independent");
    f.enrich(q1, a1, r1s1, r1s1e);
    f.hits(r1s0, &["https://fixture.example/heat-pumps"]);
    f.hits(r1s1, &["https://fixture.example/heat-pumps"]);
    f.hits(r1s1e, &["https://fixture.example/heat-pumps"]);
    f.page("https://fixture.example/heat-pumps", &[r1s0, r1s1e]);

    // r2: solar panels; same shape plus an opinion sentence.
    let q2 = "How do solar panels perform in winter?";
    let a2 = "Solar panels still generate power on cloudy days. They lose some output in snow. \
              I think solar is a wonderful investment.";
    let r2s0 = "Solar panels still generate power on cloudy days.";
    let r2s1 = "They lose some output in snow.";
    let r2s1e = "Solar panels lose some output in snow.";
    let r2s2 = "I think solar is a wonderful investment.";
    f.record("r2", q2, a2);
    f.checkworthy(r2s0, 1);
    f.checkworthy(r2s1, 1);
    f.checkworthy(r2s2, 2);
    f.independence(r2s0, "independent");
    f.independence(r2s1, "not independent");
    f.independence(r2s1e, "independent");
    f.enrich(q2, a2, r2s1, r2s1e);
    f.hits(r2s0, &["https://fixture.example/solar"]);
    f.hits(r2s1, &["https://fixture.example/solar"]);
    f.hits(r2s1e, &["https://fixture.example/solar"]);
    f.page("https://fixture.example/solar", &[r2s0, r2s1e]);

    // r3: searches land on a page with no matching content, so both the
    // original and the enriched claim stay at no-relation.
    let q3 = "What is the melting point of unobtainium?";
    let a3 = "Unobtainium melts at 1234 kelvin. This value was never measured directly.";
    let r3s0 = "Unobtainium melts at 1234 kelvin.";
    let r3s1 = "This value was never measured directly.";
    let r3s1e = "The melting point of unobtainium was never measured directly.";
    f.record("r3", q3, a3);
    f.checkworthy(r3s0, 1);
    f.checkworthy(r3s1, 1);
    f.independence(r3s0, "independent");
    f.independence(r3s1, "not independent");
    f.independence(r3s1e, "independent");
    f.enrich(q3, a3, r3s1, r3s1e);
    f.hits(r3s0, &["https://fixture.example/unobtainium"]);
    f.hits(r3s1, &["https://fixture.example/unobtainium"]);
    f.hits(r3s1e, &["https://fixture.example/unobtainium"]);
    f.page(
        "https://fixture.example/unobtainium",
        &["Unobtainium is a placeholder name used in engineering."],
    );

    // r4: one contradicted claim, one entailed claim.
    let q4 = "Is the great wall visible from space?";
    let a4 = "The wall is visible from the moon. Astronauts photographed many landmarks.";
    let r4s0 = "The wall is visible from the moon.";
    let r4s1 = "Astronauts photographed many landmarks.";
    f.record("r4", q4, a4);
    f.checkworthy(r4s0, 1);
    f.checkworthy(r4s1, 1);
    f.independence(r4s0, "independent");
    f.independence(r4s1, "independent");
    f.hits(r4s0, &["https://fixture.example/wall"]);
    f.hits(r4s1, &["https://fixture.example/landmarks"]);
    f.page(
        "https://fixture.example/wall",
        &["Experts note it is not the wall you can see from orbit."],
    );
    f.page("https://fixture.example/landmarks", &[r4s1]);

    // r5: a factual claim plus a non-claim that gets filtered.
    let q5 = "Can you summarize the ocean currents answer?";
    let a5 = "Ocean currents redistribute heat around the globe. \
              Is there anything else you would like to know?";
    let r5s0 = "Ocean currents redistribute heat around the globe.";
    let r5s1 = "Is there anything else you would like to know?";
    f.record("r5", q5, a5);
    f.checkworthy(r5s0, 1);
    f.checkworthy(r5s1, 3);
    f.independence(r5s0, "independent");
    f.hits(r5s0, &["https://fixture.example/ocean"]);
    f.page("https://fixture.example/ocean", &[r5s0]);

    // r6: the record's only claim has no search hits, so its question pool
    // is empty and the claim comes back missing.
    let q6 = "What is the airspeed of an unladen swallow?";
    let a6 = "African swallows fly at 24 miles per hour.";
    f.record("r6", q6, a6);
    f.checkworthy(a6, 1);
    f.independence(a6, "independent");
    // No search mapping for this claim on purpose.

    f.build()
}
