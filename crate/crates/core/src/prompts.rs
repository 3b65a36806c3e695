//! Versioned prompt templates and their render functions.
//!
//! The templates live as plain-text assets under `assets/prompts/` and are
//! frozen; tests diff rendered prompts against golden files. Slots use
//! `{name}` markers and are substituted in a single pass, so slot values
//! containing marker-like text are never re-expanded.

pub const SEGMENT_SENTENCE_FACTS: &str =
    include_str!("../assets/prompts/segment_sentence_facts.txt");
pub const CHECKWORTHINESS: &str = include_str!("../assets/prompts/checkworthiness.txt");
pub const CLAIM_EVIDENCE_RELATION: &str =
    include_str!("../assets/prompts/claim_evidence_relation.txt");
pub const CLAIM_INDEPENDENCE: &str = include_str!("../assets/prompts/claim_independence.txt");
pub const CLAIM_ENRICHMENT: &str = include_str!("../assets/prompts/claim_enrichment.txt");
pub const SEGMENT_ANSWER_DIRECT: &str =
    include_str!("../assets/prompts/segment_answer_direct.txt");

/// Substitutes `{name}` markers in one left-to-right pass over the template.
fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        let (before, tail) = rest.split_at(open);
        out.push_str(before);
        for (name, value) in slots {
            let marker = format!("{{{name}}}");
            if tail.as_bytes().starts_with(marker.as_bytes()) {
                out.push_str(value);
                rest = &tail[marker.len()..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// Per-sentence fact segmentation prompt with the sentence appended.
pub fn render_sentence_facts(sentence: &str) -> String {
    render(SEGMENT_SENTENCE_FACTS, &[("sentence", sentence)])
}

/// Check-worthiness classification prompt for one claim.
pub fn render_checkworthiness(claim: &str) -> String {
    render(CHECKWORTHINESS, &[("input", claim)])
}

/// Claim-evidence relation prompt with question, claim, and document slotted.
pub fn render_relation(question: &str, claim: &str, document: &str) -> String {
    render(
        CLAIM_EVIDENCE_RELATION,
        &[
            ("question", question),
            ("claim", claim),
            ("document", document),
        ],
    )
}

/// Claim independence prompt for one claim.
pub fn render_independence(claim: &str) -> String {
    render(CLAIM_INDEPENDENCE, &[("claim", claim)])
}

/// Claim enrichment prompt with question, answer, and claim slotted.
pub fn render_enrichment(question: &str, answer: &str, claim: &str) -> String {
    render(
        CLAIM_ENRICHMENT,
        &[("question", question), ("answer", answer), ("claim", claim)],
    )
}

/// Whole-answer direct segmentation prompt with question context.
pub fn render_direct_segmentation(question: &str, answer: &str) -> String {
    render(
        SEGMENT_ANSWER_DIRECT,
        &[("question", question), ("answer", answer)],
    )
}
