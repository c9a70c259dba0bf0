//! Exact top-k search over precomputed dense vectors, and construction of
//! positive/negative training pairs for a dense retriever.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bm25::{claim_query, QueryMode};
use crate::corpus::{ClaimRecord, EvidenceAbstract};
use crate::error::{Error, Result};
use crate::run::{RankedList, ScoredDoc};

pub const DEFAULT_NEGATIVES: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorLine {
    pub id: String,
    pub vec: Vec<f32>,
}

/// Fixed-dimension vectors keyed by id, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.ids.iter().position(|x| x == id).map(|i| self.vector(i))
    }

    pub fn push(&mut self, id: impl Into<String>, vec: &[f32]) -> Result<()> {
        if vec.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: vec.len(),
                line: None,
            });
        }
        if let Some(pos) = vec.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at component {pos}")));
        }
        self.ids.push(id.into());
        self.data.extend_from_slice(vec);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().map(String::as_str).zip(self.data.chunks(self.dim.max(1)))
    }
}

/// Reads `{"id","vec"}` lines. The first line fixes the dimension.
pub fn load_vectors<R: BufRead>(input: R, source_name: &str) -> Result<VectorStore> {
    let mut store: Option<VectorStore> = None;
    let mut seen = HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entry: VectorLine = serde_json::from_str(&line).map_err(|e| Error::parse(source_name, lineno, e))?;
        let store = store.get_or_insert_with(|| VectorStore::new(entry.vec.len()));
        if store.dim == 0 {
            return Err(Error::parse(source_name, lineno, "zero-length vector"));
        }
        if entry.vec.len() != store.dim {
            return Err(Error::Dimension {
                expected: store.dim,
                found: entry.vec.len(),
                line: Some(lineno),
            });
        }
        if !seen.insert(entry.id.clone()) {
            return Err(Error::DuplicateId(entry.id));
        }
        store
            .push(entry.id, &entry.vec)
            .map_err(|e| Error::parse(source_name, lineno, e))?;
    }
    Ok(store.unwrap_or_else(|| VectorStore::new(0)))
}

pub fn dump_vectors<W: Write>(mut out: W, store: &VectorStore) -> Result<()> {
    for (id, vec) in store.iter() {
        serde_json::to_writer(
            &mut out,
            &VectorLine {
                id: id.to_string(),
                vec: vec.to_vec(),
            },
        )?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Dot,
    Cosine,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Dot => "dot",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Metric::Dot),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Scores every stored vector against `query` and returns the best `k`.
/// Zero-norm vectors score 0 under cosine.
pub fn top_k(store: &VectorStore, query_id: &str, query: &[f32], k: usize, metric: Metric) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if query.len() != store.dim {
        return Err(Error::Dimension {
            expected: store.dim,
            found: query.len(),
            line: None,
        });
    }
    let q_norm = norm(query);
    let scores: Vec<ScoredDoc> = (0..store.len())
        .into_par_iter()
        .map(|i| {
            let v = store.vector(i);
            let score = match metric {
                Metric::Dot => dot(query, v),
                Metric::Cosine => {
                    let denom = q_norm * norm(v);
                    if denom == 0.0 {
                        0.0
                    } else {
                        dot(query, v) / denom
                    }
                }
            };
            ScoredDoc {
                doc_id: store.ids[i].clone(),
                score,
            }
        })
        .collect();
    Ok(RankedList::from_unsorted(query_id, scores, k))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub query: String,
    pub positive_doc_id: String,
    pub negative_doc_ids: Vec<String>,
    pub claim_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSet {
    pub pairs: Vec<TrainingPair>,
    /// Claims whose negative pool held fewer than the requested negatives.
    pub short_pool: Vec<String>,
}

/// Case-folded, order-insensitive PIO identity of a claim.
pub type PioKey = [BTreeSet<String>; 3];

pub fn pio_key(claim: &ClaimRecord) -> PioKey {
    let fold = |xs: &[String]| {
        xs.iter()
            .map(|x| x.trim().to_lowercase())
            .filter(|x| !x.is_empty())
            .collect::<BTreeSet<_>>()
    };
    [fold(&claim.populations), fold(&claim.interventions), fold(&claim.outcomes)]
}

/// For each claim, the aligned abstract is the positive and negatives are
/// drawn uniformly without replacement from abstracts aligned only to
/// claims with a different PIO set.
pub fn build_training_pairs(
    claims: &[ClaimRecord],
    abstracts: &[EvidenceAbstract],
    n_negatives: usize,
    seed: u64,
    mode: QueryMode,
) -> Result<PairSet> {
    if n_negatives == 0 {
        return Err(Error::InvalidArgument("n_negatives must be at least 1".into()));
    }
    let known: HashSet<&str> = abstracts.iter().map(|a| a.doc_id.as_str()).collect();
    if let Some(c) = claims.iter().find(|c| !known.contains(c.evidence_doc_id.as_str())) {
        return Err(Error::UnknownDocument(c.evidence_doc_id.clone()));
    }

    let keys: Vec<PioKey> = claims.iter().map(pio_key).collect();
    let mut key_ids: HashMap<&PioKey, usize> = HashMap::new();
    let key_of: Vec<usize> = keys
        .iter()
        .map(|k| {
            let next = key_ids.len();
            *key_ids.entry(k).or_insert(next)
        })
        .collect();

    // aligned documents in sorted order, each with the PIO keys of its claims
    let mut doc_keys: HashMap<&str, HashSet<usize>> = HashMap::new();
    for (c, &k) in claims.iter().zip(&key_of) {
        doc_keys.entry(c.evidence_doc_id.as_str()).or_default().insert(k);
    }
    let mut docs: Vec<&str> = doc_keys.keys().copied().collect();
    docs.sort_unstable();
    let mut docs_by_key: HashMap<usize, HashSet<&str>> = HashMap::new();
    for (&doc, ks) in &doc_keys {
        for &k in ks {
            docs_by_key.entry(k).or_default().insert(doc);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PairSet::default();
    for (claim, &key) in claims.iter().zip(&key_of) {
        let excluded = &docs_by_key[&key];
        let pool_size = docs.len() - excluded.len();
        let negatives: Vec<String> = if pool_size <= n_negatives {
            if pool_size < n_negatives {
                out.short_pool.push(claim.claim_id.clone());
            }
            docs.iter()
                .filter(|d| !excluded.contains(*d))
                .map(|d| d.to_string())
                .collect()
        } else if pool_size < 2 * n_negatives {
            let pool: Vec<&str> = docs.iter().copied().filter(|d| !excluded.contains(d)).collect();
            rand::seq::index::sample(&mut rng, pool.len(), n_negatives)
                .into_iter()
                .map(|i| pool[i].to_string())
                .collect()
        } else {
            // rejection sampling avoids materializing the pool for large corpora
            let mut chosen = Vec::with_capacity(n_negatives);
            let mut taken = HashSet::with_capacity(n_negatives);
            while chosen.len() < n_negatives {
                let d = docs[rng.gen_range(0..docs.len())];
                if !excluded.contains(d) && taken.insert(d) {
                    chosen.push(d.to_string());
                }
            }
            chosen
        };
        out.pairs.push(TrainingPair {
            query: claim_query(claim, mode).text,
            positive_doc_id: claim.evidence_doc_id.clone(),
            negative_doc_ids: negatives,
            claim_id: claim.claim_id.clone(),
        });
    }
    Ok(out)
}
