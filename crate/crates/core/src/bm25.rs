//! Okapi BM25 over evidence abstracts.
//!
//! `score(D, Q) = sum over q in Q of idf(q) * tf(q,D) * (k1 + 1) / (tf(q,D) + k1 * (1 - b + b * |D| / avgdl))`
//! with `idf(q) = ln((N - n_q + 0.5) / (n_q + 0.5) + 1)`. Query terms are
//! summed with multiplicity. Documents with no matching term are left out
//! of results.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::EvidenceAbstract;
use crate::error::{Error, Result};
use crate::run::{RankedList, ScoredDoc};
use crate::tagging;

pub const INDEX_FILE_VERSION: u32 = 1;

/// Turns text into index terms.
pub trait Analyzer {
    fn analyze(&self, text: &str) -> Vec<String>;
}

/// Tokenize, lowercase and drop pure-punctuation tokens. No stemming and no
/// stopword removal.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultAnalyzer;

impl Analyzer for DefaultAnalyzer {
    fn analyze(&self, text: &str) -> Vec<String> {
        analyze(text)
    }
}

/// [`DefaultAnalyzer`] followed by removal of a caller-supplied stopword set.
#[derive(Debug, Clone, Default)]
pub struct StopwordAnalyzer {
    pub stopwords: HashSet<String>,
}

impl Analyzer for StopwordAnalyzer {
    fn analyze(&self, text: &str) -> Vec<String> {
        analyze(text)
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }
}

pub fn analyze(text: &str) -> Vec<String> {
    tagging::tokenize(text)
        .into_iter()
        .filter(|t| !t.is_punct())
        .map(|t| t.text.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Inverted index: term postings, document lengths and collection stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    version: u32,
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl Bm25Index {
    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    /// Number of distinct indexed terms.
    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.doc_ids
            .iter()
            .position(|d| d == doc_id)
            .map(|i| self.doc_lengths[i])
    }

    /// Postings of `term` as `(doc id, tf)` pairs.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|ps| ps.iter().map(|p| (self.doc_ids[p.doc as usize].as_str(), p.tf)).collect())
            .unwrap_or_default()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let nq = self.doc_freq(term) as f64;
        ((n - nq + 0.5) / (nq + 0.5) + 1.0).ln()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let index: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if index.version != INDEX_FILE_VERSION {
            return Err(Error::Version {
                expected: INDEX_FILE_VERSION,
                found: index.version,
            });
        }
        Ok(index)
    }
}

/// The indexed text of an abstract: title then body.
pub fn document_text(doc: &EvidenceAbstract) -> String {
    if doc.title.is_empty() {
        doc.abstract_text.clone()
    } else {
        format!("{} {}", doc.title, doc.abstract_text)
    }
}

pub fn build_index(abstracts: &[EvidenceAbstract], params: Bm25Params) -> Result<Bm25Index> {
    build_index_with(abstracts, params, &DefaultAnalyzer)
}

pub fn build_index_with(abstracts: &[EvidenceAbstract], params: Bm25Params, analyzer: &dyn Analyzer) -> Result<Bm25Index> {
    let mut seen = HashSet::new();
    let mut doc_ids = Vec::with_capacity(abstracts.len());
    let mut doc_lengths = Vec::with_capacity(abstracts.len());
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    for (i, doc) in abstracts.iter().enumerate() {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(Error::DuplicateId(doc.doc_id.clone()));
        }
        let terms = analyzer.analyze(&document_text(doc));
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in &terms {
            *tf.entry(t.clone()).or_default() += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push(Posting {
                doc: i as u32,
                tf: count,
            });
        }
        doc_ids.push(doc.doc_id.clone());
        doc_lengths.push(terms.len() as u32);
    }
    let avg_doc_length = if doc_lengths.is_empty() {
        0.0
    } else {
        doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
    };
    Ok(Bm25Index {
        version: INDEX_FILE_VERSION,
        params,
        doc_ids,
        doc_lengths,
        avg_doc_length,
        postings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// The claim text alone.
    #[default]
    ClaimOnly,
    /// The claim followed by populations, interventions and outcomes.
    ClaimPlusPio,
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryMode::ClaimOnly => "claim",
            QueryMode::ClaimPlusPio => "claim_pio",
        })
    }
}

impl FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "claim" | "claim_only" => Ok(QueryMode::ClaimOnly),
            "claim_pio" | "claim_plus_pio" => Ok(QueryMode::ClaimPlusPio),
            other => Err(Error::InvalidArgument(format!("unknown query mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub mode: QueryMode,
}

/// Builds query text. Empty PIO elements are skipped.
pub fn make_query<S: AsRef<str>>(
    id: impl Into<String>,
    claim: &str,
    populations: &[S],
    interventions: &[S],
    outcomes: &[S],
    mode: QueryMode,
) -> Query {
    let mut text = claim.trim().to_string();
    if mode == QueryMode::ClaimPlusPio {
        for elem in populations.iter().chain(interventions).chain(outcomes) {
            let elem = elem.as_ref().trim();
            if !elem.is_empty() {
                if !text.is_empty() {
                    text.push(' ');
                }
                text.push_str(elem);
            }
        }
    }
    Query {
        id: id.into(),
        text,
        mode,
    }
}

pub fn claim_query(claim: &crate::corpus::ClaimRecord, mode: QueryMode) -> Query {
    make_query(
        claim.claim_id.clone(),
        &claim.claim_text,
        &claim.populations,
        &claim.interventions,
        &claim.outcomes,
        mode,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub ranked: RankedList,
    /// Set when the query analyzed to no terms.
    pub empty_query: bool,
}

pub fn search(index: &Bm25Index, query: &Query, k: usize) -> Result<SearchResult> {
    search_with(index, query, k, &DefaultAnalyzer)
}

pub fn search_with(index: &Bm25Index, query: &Query, k: usize, analyzer: &dyn Analyzer) -> Result<SearchResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let terms = analyzer.analyze(&query.text);
    if terms.is_empty() {
        return Ok(SearchResult {
            ranked: RankedList {
                query_id: query.id.clone(),
                results: Vec::new(),
            },
            empty_query: true,
        });
    }

    let Bm25Params { k1, b } = index.params;
    let mut scores = vec![0.0f64; index.doc_ids.len()];
    let mut touched: Vec<u32> = Vec::new();
    for term in &terms {
        let Some(postings) = index.postings.get(term) else {
            continue;
        };
        let idf = index.idf(term);
        for p in postings {
            let tf = p.tf as f64;
            let len_norm = index.doc_lengths[p.doc as usize] as f64 / index.avg_doc_length;
            let contribution = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_norm));
            let slot = &mut scores[p.doc as usize];
            if *slot == 0.0 {
                touched.push(p.doc);
            }
            *slot += contribution;
        }
    }
    touched.sort_unstable();
    touched.dedup();
    touched.retain(|&d| scores[d as usize] > 0.0);
    let order = |a: &u32, b: &u32| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then_with(|| index.doc_ids[*a as usize].cmp(&index.doc_ids[*b as usize]))
    };
    if touched.len() > k {
        touched.select_nth_unstable_by(k - 1, order);
        touched.truncate(k);
    }
    let results = touched
        .into_iter()
        .map(|doc| ScoredDoc {
            doc_id: index.doc_ids[doc as usize].clone(),
            score: scores[doc as usize],
        })
        .collect();
    Ok(SearchResult {
        ranked: RankedList::from_unsorted(query.id.clone(), results, k),
        empty_query: false,
    })
}
