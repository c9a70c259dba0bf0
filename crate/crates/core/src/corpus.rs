//! Record types, JSONL ingestion and export, corpus statistics,
//! train/validation splitting and whole-word mask preparation.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagging::{self, Token};

pub const DEFAULT_MASK_TOKEN: &str = "[MASK]";

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Population, intervention or outcome. There is no comparator category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PioCategory {
    #[serde(rename = "POP")]
    Population,
    #[serde(rename = "INT")]
    Intervention,
    #[serde(rename = "OUT")]
    Outcome,
}

impl PioCategory {
    pub const ALL: [PioCategory; 3] = [PioCategory::Population, PioCategory::Intervention, PioCategory::Outcome];

    /// Name used inside BIO labels (`B-Pop`).
    pub fn short_name(self) -> &'static str {
        match self {
            PioCategory::Population => "Pop",
            PioCategory::Intervention => "Int",
            PioCategory::Outcome => "Out",
        }
    }

    pub fn from_short_name(s: &str) -> Option<Self> {
        PioCategory::ALL.into_iter().find(|c| c.short_name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PioSpan {
    #[serde(flatten)]
    pub span: CharSpan,
    pub category: PioCategory,
}

/// A social-media post with character-offset claim and PIO annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedPost {
    pub post_id: String,
    pub text: String,
    #[serde(rename = "claims", default)]
    pub claim_spans: Vec<CharSpan>,
    #[serde(rename = "pio", default)]
    pub pio_spans: Vec<PioSpan>,
}

impl AnnotatedPost {
    /// PIO spans that do not lie inside any claim span.
    pub fn unanchored_pio(&self) -> Vec<&PioSpan> {
        self.pio_spans
            .iter()
            .filter(|p| !self.claim_spans.iter().any(|c| c.contains(&p.span)))
            .collect()
    }
}

/// A synthetic claim aligned to its PIO elements and one evidence abstract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub claim_text: String,
    #[serde(default)]
    pub populations: Vec<String>,
    #[serde(default)]
    pub interventions: Vec<String>,
    #[serde(default)]
    pub outcomes: Vec<String>,
    pub evidence_doc_id: String,
}

impl ClaimRecord {
    pub fn pio_elements(&self) -> impl Iterator<Item = &String> {
        self.populations.iter().chain(&self.interventions).chain(&self.outcomes)
    }
}

/// A trial abstract with its extracted PIO elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceAbstract {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub populations: Vec<String>,
    #[serde(default)]
    pub interventions: Vec<String>,
    #[serde(default)]
    pub outcomes: Vec<String>,
}

/// A JSONL record type with an identifier and per-record invariants.
pub trait Record: Serialize + DeserializeOwned {
    /// Whether identifiers must be unique within one file.
    const UNIQUE_IDS: bool = false;

    fn id(&self) -> &str;

    fn validate(&self) -> Result<()>;
}

fn check_spans<'a>(id: &str, len: usize, field: &'static str, spans: impl Iterator<Item = &'a CharSpan>) -> Result<()> {
    let mut sorted: Vec<&CharSpan> = spans.collect();
    for s in &sorted {
        if s.start >= s.end || s.end > len {
            return Err(Error::invalid(
                id,
                field,
                format!("span {s} out of bounds for text of {len} characters"),
            ));
        }
    }
    sorted.sort();
    for pair in sorted.windows(2) {
        if pair[0].overlaps(pair[1]) {
            return Err(Error::invalid(id, field, format!("spans {} and {} overlap", pair[0], pair[1])));
        }
    }
    Ok(())
}

impl Record for AnnotatedPost {
    const UNIQUE_IDS: bool = true;

    fn id(&self) -> &str {
        &self.post_id
    }

    fn validate(&self) -> Result<()> {
        let len = self.text.chars().count();
        check_spans(&self.post_id, len, "claims", self.claim_spans.iter())?;
        check_spans(&self.post_id, len, "pio", self.pio_spans.iter().map(|p| &p.span))
    }
}

impl Record for ClaimRecord {
    const UNIQUE_IDS: bool = true;

    fn id(&self) -> &str {
        &self.claim_id
    }

    fn validate(&self) -> Result<()> {
        if self.pio_elements().all(|e| e.trim().is_empty()) {
            return Err(Error::invalid(&self.claim_id, "populations", "no PIO element present"));
        }
        if self.evidence_doc_id.is_empty() {
            return Err(Error::invalid(&self.claim_id, "evidence_doc_id", "empty document id"));
        }
        Ok(())
    }
}

impl Record for EvidenceAbstract {
    const UNIQUE_IDS: bool = true;

    fn id(&self) -> &str {
        &self.doc_id
    }

    fn validate(&self) -> Result<()> {
        if self.abstract_text.trim().is_empty() {
            return Err(Error::invalid(&self.doc_id, "abstract", "abstract is empty"));
        }
        Ok(())
    }
}

/// Reads one record per line, validating each. Blank lines are skipped.
pub fn read_records_from<T: Record, R: BufRead>(input: R, source_name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::parse(source_name, idx + 1, e))?;
        record.validate()?;
        if T::UNIQUE_IDS && !seen.insert(record.id().to_string()) {
            return Err(Error::DuplicateId(record.id().to_string()));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_records<T: Record>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_records_from(BufReader::new(file), &path.display().to_string())
}

/// Reads any serde type, one JSON object per line, without record validation.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(&name, idx + 1, e))?);
    }
    Ok(out)
}

pub fn write_jsonl_to<T: Serialize, W: Write>(mut out: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let file = File::create(path)?;
    write_jsonl_to(BufWriter::new(file), records)
}

/// Checks that every claim's evidence document exists in `evidence`.
pub fn check_alignment(claims: &[ClaimRecord], evidence: &[EvidenceAbstract]) -> Result<()> {
    let ids: HashSet<&str> = evidence.iter().map(|e| e.doc_id.as_str()).collect();
    match claims.iter().find(|c| !ids.contains(c.evidence_doc_id.as_str())) {
        Some(c) => Err(Error::invalid(
            &c.claim_id,
            "evidence_doc_id",
            format!("document `{}` not in evidence set", c.evidence_doc_id),
        )),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_claims: usize,
    pub n_sentences: usize,
    pub n_tokens: usize,
    pub n_unique_tokens: usize,
    pub n_unique_pios: usize,
    pub n_populations: usize,
    pub n_interventions: usize,
    pub n_outcomes: usize,
}

fn is_sentence_end(tok: &Token) -> bool {
    matches!(tok.text.as_str(), "." | "!" | "?")
}

/// Sentences are token runs closed by `.`, `!` or `?` (or end of text) that
/// contain at least one non-punctuation token.
fn count_sentences(tokens: &[Token]) -> usize {
    let mut count = 0;
    let mut has_word = false;
    for tok in tokens {
        if is_sentence_end(tok) {
            if has_word {
                count += 1;
            }
            has_word = false;
        } else if !tok.is_punct() {
            has_word = true;
        }
    }
    count + usize::from(has_word)
}

/// Computes corpus counts. Token uniqueness is case-folded; PIO uniqueness
/// is exact string after trimming. Per-category counts are distinct
/// trimmed elements within that category.
pub fn corpus_stats(claims: &[ClaimRecord]) -> CorpusStats {
    let mut vocab = HashSet::new();
    let mut pios: HashSet<&str> = HashSet::new();
    let mut per_cat: [HashSet<&str>; 3] = Default::default();
    let mut stats = CorpusStats {
        n_claims: claims.len(),
        ..Default::default()
    };
    for claim in claims {
        let tokens = tagging::tokenize(&claim.claim_text);
        stats.n_tokens += tokens.len();
        stats.n_sentences += count_sentences(&tokens);
        vocab.extend(tokens.into_iter().map(|t| t.text.to_lowercase()));
        for (set, elems) in per_cat
            .iter_mut()
            .zip([&claim.populations, &claim.interventions, &claim.outcomes])
        {
            for e in elems.iter().map(|e| e.trim()).filter(|e| !e.is_empty()) {
                set.insert(e);
                pios.insert(e);
            }
        }
    }
    stats.n_unique_tokens = vocab.len();
    stats.n_unique_pios = pios.len();
    stats.n_populations = per_cat[0].len();
    stats.n_interventions = per_cat[1].len();
    stats.n_outcomes = per_cat[2].len();
    stats
}

/// Seeded shuffle followed by a cut at `round(ratio * N)`.
pub fn split_train_val<T: Clone>(records: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    if records.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 records to split, got {}",
            records.len()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * records.len() as f64).round() as usize;
    let (train, val) = order.split_at(n_train);
    Ok((
        train.iter().map(|&i| records[i].clone()).collect(),
        val.iter().map(|&i| records[i].clone()).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedExample {
    pub claim_id: String,
    pub original: String,
    pub masked: String,
    /// Indices into the claim's word list (punctuation tokens excluded).
    pub masked_word_indices: Vec<usize>,
}

/// Words are the non-punctuation tokens of [`tagging::tokenize`].
pub fn words(text: &str) -> Vec<Token> {
    tagging::tokenize(text).into_iter().filter(|t| !t.is_punct()).collect()
}

/// Number of words masked in a text of `n_words` words: `rate * n` rounded
/// half up.
pub fn mask_count(n_words: usize, rate: f64) -> usize {
    // the epsilon absorbs representation error such as 0.15 * 10 = 1.4999..
    ((rate * n_words as f64) + 0.5 + 1e-9).floor().min(n_words as f64) as usize
}

/// Whole-word masking: each selected word is replaced, as a whole, by a
/// single `mask_token`.
pub fn mask_corpus(claims: &[ClaimRecord], rate: f64, seed: u64, mask_token: &str) -> Result<Vec<MaskedExample>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("mask rate must be in [0, 1], got {rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(claims
        .iter()
        .map(|claim| {
            let words = words(&claim.claim_text);
            let n = mask_count(words.len(), rate);
            let mut picked = rand::seq::index::sample(&mut rng, words.len(), n).into_vec();
            picked.sort_unstable();

            let chars: Vec<char> = claim.claim_text.chars().collect();
            let mut masked = String::with_capacity(claim.claim_text.len());
            let mut cursor = 0;
            for &w in &picked {
                let tok = &words[w];
                masked.extend(&chars[cursor..tok.start]);
                masked.push_str(mask_token);
                cursor = tok.end;
            }
            masked.extend(&chars[cursor..]);

            MaskedExample {
                claim_id: claim.claim_id.clone(),
                original: claim.claim_text.clone(),
                masked,
                masked_word_indices: picked,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn claim(id: &str, text: &str, p: &[&str], i: &[&str], o: &[&str]) -> ClaimRecord {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        ClaimRecord {
            claim_id: id.into(),
            claim_text: text.into(),
            populations: own(p),
            interventions: own(i),
            outcomes: own(o),
            evidence_doc_id: format!("d-{id}"),
        }
    }

    #[test]
    fn post_with_empty_spans() {
        let line = r#"{"post_id":"p1","text":"hello there","claims":[],"pio":[]}"#;
        let posts: Vec<AnnotatedPost> = read_records_from(line.as_bytes(), "mem").unwrap();
        assert_eq!(posts.len(), 1);
        assert!(posts[0].claim_spans.is_empty() && posts[0].pio_spans.is_empty());
    }

    #[test]
    fn claim_line_parses() {
        let line = r#"{"claim_id":"c1","claim_text":"glycopyrrolate helped my sweating","populations":["hyperhidrosis"],"interventions":["glycopyrrolate"],"outcomes":[],"evidence_doc_id":"d1"}"#;
        let claims: Vec<ClaimRecord> = read_records_from(line.as_bytes(), "mem").unwrap();
        assert_eq!(claims[0].populations, vec!["hyperhidrosis"]);
        assert_eq!(claims[0].interventions, vec!["glycopyrrolate"]);
        assert!(claims[0].outcomes.is_empty());
    }

    #[test]
    fn out_of_bounds_span_names_post() {
        let line = r#"{"post_id":"p9","text":"abc","claims":[{"start":0,"end":4}],"pio":[]}"#;
        let err = read_records_from::<AnnotatedPost, _>(line.as_bytes(), "mem").unwrap_err();
        match err {
            Error::InvalidRecord { id, field, .. } => {
                assert_eq!(id, "p9");
                assert_eq!(field, "claims");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlapping_pio_rejected() {
        let line = r#"{"post_id":"p","text":"abcdef","claims":[],"pio":[{"start":0,"end":3,"category":"POP"},{"start":2,"end":4,"category":"OUT"}]}"#;
        assert!(read_records_from::<AnnotatedPost, _>(line.as_bytes(), "mem").is_err());
    }

    #[test]
    fn malformed_json_reports_line() {
        let input = "{\"doc_id\":\"d\",\"title\":\"\",\"abstract\":\"x\"}\n{oops\n";
        let err = read_records_from::<EvidenceAbstract, _>(input.as_bytes(), "ev.jsonl").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn duplicate_doc_ids_rejected() {
        let input = "{\"doc_id\":\"d\",\"title\":\"\",\"abstract\":\"x\"}\n{\"doc_id\":\"d\",\"title\":\"\",\"abstract\":\"y\"}\n";
        assert!(matches!(
            read_records_from::<EvidenceAbstract, _>(input.as_bytes(), "ev"),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn claim_without_pio_rejected() {
        let c = claim("c", "text", &[], &[" "], &[]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn unanchored_pio_flagged() {
        let post = AnnotatedPost {
            post_id: "p".into(),
            text: "aaa bbb ccc".into(),
            claim_spans: vec![CharSpan::new(0, 7)],
            pio_spans: vec![
                PioSpan { span: CharSpan::new(0, 3), category: PioCategory::Population },
                PioSpan { span: CharSpan::new(8, 11), category: PioCategory::Outcome },
            ],
        };
        let flagged = post.unanchored_pio();
        assert_eq!(flagged.len(), 1);
        assert_eq!(flagged[0].span, CharSpan::new(8, 11));
    }

    #[test]
    fn alignment_check() {
        let claims = vec![claim("c", "x", &["p"], &[], &[])];
        let ev = EvidenceAbstract {
            doc_id: "d-c".into(),
            title: String::new(),
            abstract_text: "a".into(),
            populations: vec![],
            interventions: vec![],
            outcomes: vec![],
        };
        assert!(check_alignment(&claims, std::slice::from_ref(&ev)).is_ok());
        assert!(check_alignment(&claims, &[]).is_err());
    }

    #[test]
    fn stats_empty() {
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
    }

    #[test]
    fn stats_hand_count() {
        let claims = vec![claim("1", "a b", &["x"], &[], &[]), claim("2", "a c", &["x"], &["y"], &[])];
        let s = corpus_stats(&claims);
        assert_eq!(s.n_claims, 2);
        assert_eq!(s.n_tokens, 4);
        assert_eq!(s.n_unique_tokens, 3);
        assert_eq!(s.n_unique_pios, 2);
        assert_eq!(s.n_sentences, 2);
        assert_eq!((s.n_populations, s.n_interventions, s.n_outcomes), (1, 1, 0));
    }

    #[test]
    fn stats_case_folds_tokens_and_trims_pios() {
        let claims = vec![claim("1", "Pain pain. It hurts!", &[" x "], &["x"], &["X"])];
        let s = corpus_stats(&claims);
        assert_eq!(s.n_unique_tokens, 5);
        assert_eq!(s.n_unique_pios, 2);
        assert_eq!(s.n_sentences, 2);
    }

    #[test]
    fn split_sizes() {
        let records: Vec<u32> = (0..10).collect();
        let (train, val) = split_train_val(&records, 0.9, 7).unwrap();
        assert_eq!((train.len(), val.len()), (9, 1));
        assert_eq!(split_train_val(&records, 0.9, 7).unwrap(), (train, val));
    }

    #[test]
    fn split_seed_changes_partition() {
        let records: Vec<u32> = (0..100).collect();
        let a = split_train_val(&records, 0.9, 1).unwrap();
        let b = split_train_val(&records, 0.9, 2).unwrap();
        assert_ne!(a.1, b.1);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(split_train_val(&[1], 0.9, 0).is_err());
        assert!(split_train_val(&[1, 2], 1.0, 0).is_err());
        assert!(split_train_val(&[1, 2], 0.0, 0).is_err());
    }

    #[test]
    fn mask_rate_zero_and_one() {
        let claims = vec![claim("1", "a b c", &["a"], &[], &[])];
        let none = mask_corpus(&claims, 0.0, 3, DEFAULT_MASK_TOKEN).unwrap();
        assert_eq!(none[0].masked, "a b c");
        assert!(none[0].masked_word_indices.is_empty());

        let all = mask_corpus(&claims, 1.0, 3, DEFAULT_MASK_TOKEN).unwrap();
        assert_eq!(all[0].masked, "[MASK] [MASK] [MASK]");
        assert_eq!(all[0].masked_word_indices, vec![0, 1, 2]);
    }

    #[test]
    fn mask_keeps_punctuation_and_whole_words() {
        let claims = vec![claim("1", "sub-Q shots, daily.", &["a"], &[], &[])];
        let out = mask_corpus(&claims, 1.0, 0, "#").unwrap();
        assert_eq!(out[0].masked, "# #, #.");
    }

    #[test]
    fn mask_count_rounds_half_up() {
        assert_eq!(mask_count(10, 0.15), 2);
        assert_eq!(mask_count(3, 0.15), 0);
        assert_eq!(mask_count(4, 0.15), 1);
        assert_eq!(mask_count(0, 0.5), 0);
    }
}
