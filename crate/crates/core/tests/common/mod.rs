//! Oracles and synthetic data shared by the integration suites. Nothing here
//! calls the inference code it is used to check.

#![allow(dead_code)]

use medclaim::crf::Weights;
use medclaim::{ClaimRecord, EvidenceAbstract, FeatureVector};
use rand::seq::SliceRandom;
use rand::Rng;

/// Every labelling of length `len` over `n_labels` labels.
pub fn all_labelings(len: usize, n_labels: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n_labels).map(move |y| {
                    let mut p = prefix.clone();
                    p.push(y);
                    p
                })
            })
            .collect();
    }
    out
}

/// Direct sum of potentials for one labelling.
pub fn brute_score(w: &Weights, feats: &[FeatureVector], labels: &[usize]) -> f64 {
    let mut s = w.start(labels[0]) + w.end(*labels.last().unwrap());
    for (t, &y) in labels.iter().enumerate() {
        for &f in &feats[t] {
            s += w.emission(f as usize, y);
        }
        if t > 0 {
            s += w.transition(labels[t - 1], y);
        }
    }
    s
}

/// `ln sum exp(score)` over all labellings, by enumeration.
pub fn brute_log_z(w: &Weights, feats: &[FeatureVector]) -> f64 {
    let scores: Vec<f64> = all_labelings(feats.len(), w.n_labels())
        .iter()
        .map(|l| brute_score(w, feats, l))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Best score and every labelling achieving it (within 1e-12).
pub fn brute_argmax(w: &Weights, feats: &[FeatureVector]) -> (f64, Vec<Vec<usize>>) {
    let labelings = all_labelings(feats.len(), w.n_labels());
    let scores: Vec<f64> = labelings.iter().map(|l| brute_score(w, feats, l)).collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let winners = labelings
        .into_iter()
        .zip(&scores)
        .filter(|(_, s)| best - **s < 1e-12)
        .map(|(l, _)| l)
        .collect();
    (best, winners)
}

/// Per-position label marginals by enumeration.
pub fn brute_marginals(w: &Weights, feats: &[FeatureVector]) -> Vec<f64> {
    let l = w.n_labels();
    let log_z = brute_log_z(w, feats);
    let mut out = vec![0.0; feats.len() * l];
    for labels in all_labelings(feats.len(), l) {
        let p = (brute_score(w, feats, &labels) - log_z).exp();
        for (t, &y) in labels.iter().enumerate() {
            out[t * l + y] += p;
        }
    }
    out
}

pub fn random_weights<R: Rng>(rng: &mut R, n_features: usize, n_labels: usize, scale: f64) -> Weights {
    let mut w = Weights::zeros(n_features, n_labels);
    for p in w.as_mut_slice() {
        *p = rng.gen_range(-scale..scale);
    }
    w
}

pub fn random_features<R: Rng>(rng: &mut R, len: usize, n_features: usize) -> Vec<FeatureVector> {
    (0..len)
        .map(|_| {
            let k = rng.gen_range(1..=3.min(n_features));
            let mut ids: Vec<u32> = rand::seq::index::sample(rng, n_features, k)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            ids.sort_unstable();
            ids
        })
        .collect()
}

pub const FILLER: &[&str] = &[
    "i", "my", "was", "have", "been", "after", "the", "doctor", "said", "really", "feel", "week", "since", "started",
    "taking", "it", "and", "but", "also", "day", "night", "better", "worse", "much", "some", "think", "they", "months",
    "years", "today", "still", "never", "again", "just", "so", "when", "then", "more", "less", "about",
];

pub const MEDICAL: &[&str] = &[
    "lupus", "methotrexate", "plaquenil", "nausea", "ibs", "fodmap", "bloating", "migraine", "triptan", "aura",
    "psoriasis", "biologic", "itching", "asthma", "inhaler", "wheeze", "smokers", "nicotine", "cessation",
    "hyperhidrosis", "glycopyrrolate", "sweating", "insomnia", "melatonin", "fatigue", "arthritis", "ibuprofen",
    "stiffness", "eczema", "steroid", "flare", "diabetes", "metformin", "glucose", "crohns", "budesonide",
    "remission", "acne", "isotretinoin", "scarring", "anxiety", "sertraline", "panic", "gout", "allopurinol",
    "uric", "rosacea", "ivermectin", "redness", "obesity",
];

fn sample_words<R: Rng>(rng: &mut R, pool: &[&str], n: usize) -> Vec<String> {
    (0..n).map(|_| pool.choose(rng).unwrap().to_string()).collect()
}

/// Claim/abstract pairs where abstracts state their PIO terms and claims
/// mention each PIO term only with probability `mention_rate`.
pub fn desk_corpus<R: Rng>(rng: &mut R, n: usize, mention_rate: f64) -> (Vec<ClaimRecord>, Vec<EvidenceAbstract>) {
    let mut claims = Vec::with_capacity(n);
    let mut abstracts = Vec::with_capacity(n);
    for i in 0..n {
        let terms: Vec<&str> = rand::seq::index::sample(rng, MEDICAL.len(), 3)
            .into_iter()
            .map(|j| MEDICAL[j])
            .collect();
        let (p, iv, o) = (terms[0].to_string(), terms[1].to_string(), terms[2].to_string());
        let doc_id = format!("doc{i:04}");

        let mut body = sample_words(rng, FILLER, 40);
        for t in &terms {
            for _ in 0..2 {
                let at = rng.gen_range(0..=body.len());
                body.insert(at, t.to_string());
            }
        }
        // off-topic medical vocabulary so term overlap alone is not decisive
        for t in sample_words(rng, MEDICAL, 4) {
            let at = rng.gen_range(0..=body.len());
            body.insert(at, t);
        }
        abstracts.push(EvidenceAbstract {
            doc_id: doc_id.clone(),
            title: format!("trial of {iv} in {p}"),
            abstract_text: body.join(" "),
            populations: vec![p.clone()],
            interventions: vec![iv.clone()],
            outcomes: vec![o.clone()],
        });

        let mut text = sample_words(rng, FILLER, 12);
        for t in &terms {
            if rng.gen_bool(mention_rate) {
                let at = rng.gen_range(0..=text.len());
                text.insert(at, t.to_string());
            }
        }
        claims.push(ClaimRecord {
            claim_id: format!("claim{i:04}"),
            claim_text: text.join(" "),
            populations: vec![p],
            interventions: vec![iv],
            outcomes: vec![o],
            evidence_doc_id: doc_id,
        });
    }
    (claims, abstracts)
}

/// Token sequences where `marker` opens a three-token claim span: the marker
/// takes `B` and the next two tokens `I`. Returns (words, label ids).
pub fn marker_corpus<R: Rng>(rng: &mut R, n: usize, marker: &str) -> Vec<(Vec<String>, Vec<usize>)> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(8..=20);
            let mut words = sample_words(rng, FILLER, len);
            let mut labels = vec![0usize; len];
            let mut t = 0;
            while t + 3 <= len {
                if rng.gen_bool(0.15) {
                    words[t] = marker.to_string();
                    labels[t] = 1;
                    labels[t + 1] = 2;
                    labels[t + 2] = 2;
                    t += 3;
                } else {
                    t += 1;
                }
            }
            (words, labels)
        })
        .collect()
}

/// Claims with `n_words` words in total, drawn from the filler vocabulary
/// with occasional punctuation and hyphenated words.
pub fn word_corpus<R: Rng>(rng: &mut R, n_words: usize) -> Vec<ClaimRecord> {
    let mut claims = Vec::new();
    let mut total = 0;
    let mut i = 0;
    while total < n_words {
        let len = rng.gen_range(12..=32);
        let mut parts = Vec::with_capacity(len);
        for j in 0..len {
            let mut w = if rng.gen_bool(0.1) {
                format!("{}-{}", MEDICAL.choose(rng).unwrap(), FILLER.choose(rng).unwrap())
            } else {
                FILLER.choose(rng).unwrap().to_string()
            };
            if rng.gen_bool(0.1) {
                w.push(',');
            }
            if j == len - 1 {
                w.push('.');
            }
            parts.push(w);
        }
        total += len;
        claims.push(ClaimRecord {
            claim_id: format!("c{i}"),
            claim_text: parts.join(" "),
            populations: vec!["x".into()],
            interventions: vec![],
            outcomes: vec![],
            evidence_doc_id: format!("d{i}"),
        });
        i += 1;
    }
    claims
}
