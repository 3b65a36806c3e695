//! Post-hoc answer attribution for LLM responses.
//!
//! The pipeline segments a model answer into claims, classifies their
//! check-worthiness, optionally rewrites non-independent claims with
//! context, retrieves web evidence per claim, classifies claim-evidence
//! entailment, and reports attribution-quality metrics.
//!
//! All remote services (chat, embeddings, NLI, search, page fetch) sit
//! behind the traits in [`backends`], with deterministic mocks and a
//! record/replay cache so whole runs reproduce byte-for-byte offline.

pub mod analysis;
pub mod attribution;
pub mod backends;
pub mod model;
pub mod par;
pub mod prompts;
pub mod pipeline;
pub mod retrieval;
pub mod segmentation;
pub mod testkit;

pub use model::{
    Claim, ClaimOrigin, EvidenceChunk, Independence, QARecord, Relation, RelationLabel,
    RelevanceClass,
};
