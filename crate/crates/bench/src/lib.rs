//! Seeded synthetic fixtures for the benchmarks.

use medclaim::{ClaimRecord, EvidenceAbstract, FeatureVector, LabeledSequence, VectorStore, Weights};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "i", "my", "was", "have", "been", "after", "the", "doctor", "said", "really", "feel", "week", "since", "started",
    "taking", "it", "and", "but", "also", "day", "night", "better", "worse", "much", "some", "months", "years",
    "lupus", "methotrexate", "nausea", "ibs", "fodmap", "bloating", "migraine", "triptan", "asthma", "inhaler",
    "wheeze", "insomnia", "melatonin", "fatigue", "arthritis", "ibuprofen", "eczema", "steroid", "diabetes",
    "metformin", "glucose", "acne", "anxiety", "sertraline", "gout", "allopurinol", "patients", "placebo",
    "randomized", "trial", "reduction", "significant", "outcome", "dose", "weeks", "adults", "children",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn text<R: Rng>(rng: &mut R, n: usize) -> String {
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn weights(seed: u64, n_features: usize, n_labels: usize) -> Weights {
    let mut rng = rng(seed);
    let mut w = Weights::zeros(n_features, n_labels);
    for v in w.as_mut_slice() {
        *v = rng.gen_range(-1.0..1.0);
    }
    w
}

/// Each token fires `active` distinct features drawn from `n_features`.
pub fn features(seed: u64, len: usize, n_features: usize, active: usize) -> Vec<FeatureVector> {
    let mut rng = rng(seed);
    (0..len)
        .map(|_| {
            let mut ids: Vec<u32> = rand::seq::index::sample(&mut rng, n_features, active)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            ids.sort_unstable();
            ids
        })
        .collect()
}

pub fn labeled_batch(seed: u64, n: usize, len: usize, n_features: usize, n_labels: usize) -> Vec<LabeledSequence> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| LabeledSequence {
            features: features(seed.wrapping_add(i as u64 + 1), len, n_features, 18),
            labels: (0..len).map(|_| rng.gen_range(0..n_labels)).collect(),
        })
        .collect()
}

pub fn abstracts(seed: u64, n: usize, words: usize) -> Vec<EvidenceAbstract> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| EvidenceAbstract {
            doc_id: format!("d{i}"),
            title: text(&mut rng, 6),
            abstract_text: text(&mut rng, words),
            populations: Vec::new(),
            interventions: Vec::new(),
            outcomes: Vec::new(),
        })
        .collect()
}

pub fn claims(seed: u64, n: usize) -> Vec<ClaimRecord> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| ClaimRecord {
            claim_id: format!("c{i}"),
            claim_text: text(&mut rng, 20),
            populations: vec![WORDS[rng.gen_range(27..WORDS.len())].to_string()],
            interventions: vec![WORDS[rng.gen_range(27..WORDS.len())].to_string()],
            outcomes: vec![WORDS[rng.gen_range(27..WORDS.len())].to_string()],
            evidence_doc_id: format!("d{i}"),
        })
        .collect()
}

pub fn vectors(seed: u64, n: usize, dim: usize) -> VectorStore {
    let mut rng = rng(seed);
    let mut store = VectorStore::new(dim);
    let mut buf = vec![0f32; dim];
    for i in 0..n {
        for x in buf.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        store.push(format!("v{i}"), &buf).expect("dimension matches");
    }
    store
}
