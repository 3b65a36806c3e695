//! Exact-search index vs an independent brute-force cosine oracle.

use attributor_core::model::EvidenceChunk;
use attributor_core::retrieval::{build_index, VectorIndex};
use rand::Rng;
use rand::SeedableRng;

const DIM: usize = 32;

fn random_unit_vector(rng: &mut impl Rng) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..DIM).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 1e-3 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Independent oracle: full cosine (not assuming unit norms), full sort,
/// ties by insertion index.
fn brute_force_top_k(
    vectors: &[Vec<f32>],
    query: &[f32],
    top_k: usize,
) -> Vec<(usize, f32)> {
    let cosine = |a: &[f32], b: &[f32]| {
        let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
        let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
        dot / (na * nb)
    };
    let mut scored: Vec<(usize, f32)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, cosine(v, query)))
        .collect();
    scored.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        std::cmp::Ordering::Equal => a.0.cmp(&b.0),
        other => other,
    });
    scored.truncate(top_k);
    scored
}

fn build(vectors: &[Vec<f32>]) -> VectorIndex {
    let chunks: Vec<EvidenceChunk> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            EvidenceChunk::new(
                format!("c{i:04}"),
                "https://example.com/x",
                i,
                "chunk text",
                64,
                v.clone(),
            )
            .unwrap()
        })
        .collect();
    build_index(chunks).unwrap()
}

#[test]
fn top5_matches_brute_force_on_random_vectors() {
    let started = std::time::Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let vectors: Vec<Vec<f32>> = (0..200).map(|_| random_unit_vector(&mut rng)).collect();
    let index = build(&vectors);

    for _ in 0..20 {
        let query = random_unit_vector(&mut rng);
        let expected = brute_force_top_k(&vectors, &query, 5);
        let got = index.query(&query, 5);
        assert_eq!(got.len(), expected.len());
        for (hit, (idx, score)) in got.iter().zip(&expected) {
            assert_eq!(hit.chunk.id, format!("c{idx:04}"));
            assert!(
                (hit.score - score).abs() <= 1e-5,
                "score {} vs oracle {score}",
                hit.score
            );
        }
    }
    assert!(started.elapsed() < std::time::Duration::from_secs(1));
}

#[test]
fn exact_search_equals_oracle_with_duplicated_vectors() {
    // Duplicated embeddings force ties; insertion order must decide.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let base = random_unit_vector(&mut rng);
    let mut vectors = vec![base.clone(); 4];
    for _ in 0..60 {
        vectors.push(random_unit_vector(&mut rng));
    }
    let index = build(&vectors);
    let expected = brute_force_top_k(&vectors, &base, 6);
    let got = index.query(&base, 6);
    let got_ids: Vec<&str> = got.iter().map(|h| h.chunk.id.as_str()).collect();
    let expected_ids: Vec<String> = expected.iter().map(|(i, _)| format!("c{i:04}")).collect();
    assert_eq!(got_ids, expected_ids);
    assert_eq!(&got_ids[..4], &["c0000", "c0001", "c0002", "c0003"]);
}
