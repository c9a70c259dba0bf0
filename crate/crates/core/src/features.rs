//! Per-token CRF features: the word, its POS tag, four orthographic
//! predicates and a window of three words and tags on each side.
//!
//! Features are strings of the form `template=value`. Out-of-range window
//! slots emit a boundary sentinel (`BOS@-2`, `EOS@+1`) so every token
//! carries the same number of features.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tagging::is_punct_char;

/// Window offsets, in emission order.
pub const WINDOW: [isize; 6] = [-3, -2, -1, 1, 2, 3];

/// Universal-dependencies coarse tags plus `OTHER` for anything the
/// heuristic tagger cannot place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
    Other,
}

impl PosTag {
    pub const ALL: [PosTag; 18] = [
        PosTag::Adj,
        PosTag::Adp,
        PosTag::Adv,
        PosTag::Aux,
        PosTag::Cconj,
        PosTag::Det,
        PosTag::Intj,
        PosTag::Noun,
        PosTag::Num,
        PosTag::Part,
        PosTag::Pron,
        PosTag::Propn,
        PosTag::Punct,
        PosTag::Sconj,
        PosTag::Sym,
        PosTag::Verb,
        PosTag::X,
        PosTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Adj => "ADJ",
            PosTag::Adp => "ADP",
            PosTag::Adv => "ADV",
            PosTag::Aux => "AUX",
            PosTag::Cconj => "CCONJ",
            PosTag::Det => "DET",
            PosTag::Intj => "INTJ",
            PosTag::Noun => "NOUN",
            PosTag::Num => "NUM",
            PosTag::Part => "PART",
            PosTag::Pron => "PRON",
            PosTag::Propn => "PROPN",
            PosTag::Punct => "PUNCT",
            PosTag::Sconj => "SCONJ",
            PosTag::Sym => "SYM",
            PosTag::Verb => "VERB",
            PosTag::X => "X",
            PosTag::Other => "OTHER",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        PosTag::ALL
            .into_iter()
            .find(|t| t.as_str() == upper)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown POS tag `{s}`")))
    }
}

const LEXICON: &[(&str, PosTag)] = &[
    ("i", PosTag::Pron),
    ("me", PosTag::Pron),
    ("my", PosTag::Pron),
    ("you", PosTag::Pron),
    ("your", PosTag::Pron),
    ("he", PosTag::Pron),
    ("him", PosTag::Pron),
    ("his", PosTag::Pron),
    ("she", PosTag::Pron),
    ("her", PosTag::Pron),
    ("it", PosTag::Pron),
    ("its", PosTag::Pron),
    ("we", PosTag::Pron),
    ("us", PosTag::Pron),
    ("our", PosTag::Pron),
    ("they", PosTag::Pron),
    ("them", PosTag::Pron),
    ("their", PosTag::Pron),
    ("this", PosTag::Pron),
    ("that", PosTag::Pron),
    ("these", PosTag::Pron),
    ("those", PosTag::Pron),
    ("who", PosTag::Pron),
    ("what", PosTag::Pron),
    ("the", PosTag::Det),
    ("a", PosTag::Det),
    ("an", PosTag::Det),
    ("some", PosTag::Det),
    ("any", PosTag::Det),
    ("every", PosTag::Det),
    ("each", PosTag::Det),
    ("no", PosTag::Det),
    ("all", PosTag::Det),
    ("of", PosTag::Adp),
    ("in", PosTag::Adp),
    ("on", PosTag::Adp),
    ("at", PosTag::Adp),
    ("for", PosTag::Adp),
    ("with", PosTag::Adp),
    ("without", PosTag::Adp),
    ("from", PosTag::Adp),
    ("to", PosTag::Adp),
    ("by", PosTag::Adp),
    ("about", PosTag::Adp),
    ("after", PosTag::Adp),
    ("before", PosTag::Adp),
    ("during", PosTag::Adp),
    ("into", PosTag::Adp),
    ("over", PosTag::Adp),
    ("under", PosTag::Adp),
    ("and", PosTag::Cconj),
    ("or", PosTag::Cconj),
    ("but", PosTag::Cconj),
    ("nor", PosTag::Cconj),
    ("because", PosTag::Sconj),
    ("if", PosTag::Sconj),
    ("while", PosTag::Sconj),
    ("although", PosTag::Sconj),
    ("since", PosTag::Sconj),
    ("when", PosTag::Sconj),
    ("not", PosTag::Part),
    ("n't", PosTag::Part),
    ("can", PosTag::Aux),
    ("could", PosTag::Aux),
    ("will", PosTag::Aux),
    ("would", PosTag::Aux),
    ("should", PosTag::Aux),
    ("may", PosTag::Aux),
    ("might", PosTag::Aux),
    ("must", PosTag::Aux),
    ("shall", PosTag::Aux),
    ("is", PosTag::Verb),
    ("are", PosTag::Verb),
    ("was", PosTag::Verb),
    ("were", PosTag::Verb),
    ("be", PosTag::Verb),
    ("been", PosTag::Verb),
    ("am", PosTag::Verb),
    ("have", PosTag::Verb),
    ("has", PosTag::Verb),
    ("had", PosTag::Verb),
    ("do", PosTag::Verb),
    ("does", PosTag::Verb),
    ("did", PosTag::Verb),
    ("get", PosTag::Verb),
    ("got", PosTag::Verb),
    ("take", PosTag::Verb),
    ("took", PosTag::Verb),
    ("make", PosTag::Verb),
    ("made", PosTag::Verb),
    ("feel", PosTag::Verb),
    ("felt", PosTag::Verb),
    ("very", PosTag::Adv),
    ("too", PosTag::Adv),
    ("also", PosTag::Adv),
    ("just", PosTag::Adv),
    ("still", PosTag::Adv),
    ("never", PosTag::Adv),
    ("always", PosTag::Adv),
    ("often", PosTag::Adv),
    ("bad", PosTag::Adj),
    ("good", PosTag::Adj),
    ("better", PosTag::Adj),
    ("worse", PosTag::Adj),
    ("new", PosTag::Adj),
    ("oh", PosTag::Intj),
    ("yes", PosTag::Intj),
    ("ok", PosTag::Intj),
    ("one", PosTag::Num),
    ("two", PosTag::Num),
    ("three", PosTag::Num),
    ("four", PosTag::Num),
    ("five", PosTag::Num),
    ("six", PosTag::Num),
    ("seven", PosTag::Num),
    ("eight", PosTag::Num),
    ("nine", PosTag::Num),
    ("ten", PosTag::Num),
];

const SUFFIXES: &[(&str, PosTag)] = &[
    ("ly", PosTag::Adv),
    ("ing", PosTag::Verb),
    ("ed", PosTag::Verb),
    ("ize", PosTag::Verb),
    ("ous", PosTag::Adj),
    ("ful", PosTag::Adj),
    ("ive", PosTag::Adj),
    ("able", PosTag::Adj),
    ("ible", PosTag::Adj),
    ("less", PosTag::Adj),
    ("ic", PosTag::Adj),
    ("tion", PosTag::Noun),
    ("sion", PosTag::Noun),
    ("ness", PosTag::Noun),
    ("ment", PosTag::Noun),
    ("ity", PosTag::Noun),
    ("ism", PosTag::Noun),
];

fn looks_numeric(word: &str) -> bool {
    let mut digits = 0;
    for c in word.chars() {
        if c.is_ascii_digit() {
            digits += 1;
        } else if !matches!(c, '.' | ',' | '%') {
            return false;
        }
    }
    digits > 0 && word.chars().next().is_some_and(|c| c.is_ascii_digit())
}

/// Rule-based tag for a single token: punctuation and digit rules, then the
/// closed-class lexicon, then suffix rules, defaulting to `NOUN`.
pub fn heuristic_tag(word: &str) -> PosTag {
    if word.is_empty() {
        return PosTag::X;
    }
    if word.chars().all(is_punct_char) {
        return if word.chars().all(|c| c.is_ascii_punctuation() && !"$%+<=>^|~#&*@".contains(c)) {
            PosTag::Punct
        } else {
            PosTag::Sym
        };
    }
    if looks_numeric(word) {
        return PosTag::Num;
    }
    let lower = word.to_lowercase();
    if let Some(&(_, tag)) = LEXICON.iter().find(|(w, _)| *w == lower) {
        return tag;
    }
    let len = lower.chars().count();
    for &(suffix, tag) in SUFFIXES {
        if len >= suffix.len() + 3 && lower.ends_with(suffix) {
            return tag;
        }
    }
    if !word.chars().any(char::is_alphabetic) {
        return PosTag::Other;
    }
    PosTag::Noun
}

/// Tags `tokens`, passing externally supplied tags through unchanged.
pub fn pos_tag<S: AsRef<str>>(tokens: &[S], provided: Option<&[PosTag]>) -> Result<Vec<PosTag>> {
    match provided {
        Some(tags) if tags.len() != tokens.len() => Err(Error::LengthMismatch {
            index: 0,
            expected: tokens.len(),
            found: tags.len(),
        }),
        Some(tags) => Ok(tags.to_vec()),
        None => Ok(tokens.iter().map(|t| heuristic_tag(t.as_ref())).collect()),
    }
}

pub fn is_alnum(word: &str) -> bool {
    !word.is_empty() && word.chars().all(char::is_alphanumeric)
}

/// At least one cased character, and every cased character upper case.
pub fn is_upper(word: &str) -> bool {
    let mut cased = false;
    for c in word.chars() {
        if c.is_lowercase() {
            return false;
        }
        cased |= c.is_uppercase();
    }
    cased
}

pub fn is_numeric(word: &str) -> bool {
    !word.is_empty() && word.chars().all(char::is_numeric)
}

/// Upper-case characters only start a cased run and lower-case characters
/// only continue one, with at least one cased character present.
pub fn is_title(word: &str) -> bool {
    let mut prev_cased = false;
    let mut cased = false;
    for c in word.chars() {
        if c.is_uppercase() {
            if prev_cased {
                return false;
            }
            prev_cased = true;
            cased = true;
        } else if c.is_lowercase() {
            if !prev_cased {
                return false;
            }
            prev_cased = true;
            cased = true;
        } else {
            prev_cased = false;
        }
    }
    cased
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn offset_name(d: isize) -> String {
    if d > 0 {
        format!("+{d}")
    } else {
        d.to_string()
    }
}

/// Feature strings for token `i`, always 18 of them.
pub fn extract_features<S: AsRef<str>>(tokens: &[S], pos: &[PosTag], i: usize) -> Result<Vec<String>> {
    if i >= tokens.len() {
        return Err(Error::InvalidArgument(format!(
            "token index {i} out of range for {} tokens",
            tokens.len()
        )));
    }
    if pos.len() != tokens.len() {
        return Err(Error::LengthMismatch {
            index: 0,
            expected: tokens.len(),
            found: pos.len(),
        });
    }
    let word = tokens[i].as_ref();
    let mut out = Vec::with_capacity(6 + 2 * WINDOW.len());
    out.push(format!("word={}", word.to_lowercase()));
    out.push(format!("pos={}", pos[i]));
    out.push(format!("is_alnum={}", flag(is_alnum(word))));
    out.push(format!("is_upper={}", flag(is_upper(word))));
    out.push(format!("is_numeric={}", flag(is_numeric(word))));
    out.push(format!("is_title={}", flag(is_title(word))));
    for d in WINDOW {
        let name = offset_name(d);
        let j = i as isize + d;
        if j < 0 {
            out.push(format!("word@{name}=BOS@{name}"));
            out.push(format!("pos@{name}=BOS@{name}"));
        } else if j as usize >= tokens.len() {
            out.push(format!("word@{name}=EOS@{name}"));
            out.push(format!("pos@{name}=EOS@{name}"));
        } else {
            let j = j as usize;
            out.push(format!("word@{name}={}", tokens[j].as_ref().to_lowercase()));
            out.push(format!("pos@{name}={}", pos[j]));
        }
    }
    Ok(out)
}

/// Features for every token of a sequence.
pub fn sequence_features<S: AsRef<str>>(tokens: &[S], pos: &[PosTag]) -> Result<Vec<Vec<String>>> {
    (0..tokens.len()).map(|i| extract_features(tokens, pos, i)).collect()
}

/// Splits a feature string into its template name and value.
pub fn parse_feature(feature: &str) -> Option<(&str, &str)> {
    feature.split_once('=')
}

/// Sorted, de-duplicated feature ids of one token.
pub type FeatureVector = Vec<u32>;

/// Bijection between feature strings and contiguous ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureDictionary {
    names: Vec<String>,
    index: HashMap<String, u32>,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct DictLine {
    feature: String,
    id: u32,
}

impl FeatureDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `feature`, assigning the next free id if unseen.
    pub fn insert(&mut self, feature: &str) -> Result<u32> {
        if let Some(&id) = self.index.get(feature) {
            return Ok(id);
        }
        if self.frozen {
            return Err(Error::InvalidArgument(format!(
                "feature dictionary is frozen; cannot add `{feature}`"
            )));
        }
        let id = self.names.len() as u32;
        self.names.push(feature.to_string());
        self.index.insert(feature.to_string(), id);
        Ok(id)
    }

    pub fn get(&self, feature: &str) -> Option<u32> {
        self.index.get(feature).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Maps feature strings to ids, dropping any not in the dictionary.
    pub fn vectorize<S: AsRef<str>>(&self, features: &[S]) -> FeatureVector {
        let mut ids: Vec<u32> = features.iter().filter_map(|f| self.get(f.as_ref())).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Rebuilds a frozen dictionary from names listed in id order.
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            if index.insert(name.clone(), id as u32).is_some() {
                return Err(Error::DuplicateId(name.clone()));
            }
        }
        Ok(Self {
            names,
            index,
            frozen: true,
        })
    }

    /// SHA-256 over the feature names in id order, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        format!("{:x}", hasher.finalize())
    }

    /// One `{"feature","id"}` object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (id, feature) in self.names.iter().enumerate() {
            serde_json::to_writer(
                &mut out,
                &DictLine {
                    feature: feature.clone(),
                    id: id as u32,
                },
            )?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R, source_name: &str) -> Result<Self> {
        let mut lines = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: DictLine = serde_json::from_str(&line).map_err(|e| Error::parse(source_name, idx + 1, e))?;
            lines.push(entry);
        }
        lines.sort_by_key(|l| l.id);
        if lines.iter().enumerate().any(|(i, l)| l.id as usize != i) {
            return Err(Error::parse(source_name, 0, "feature ids are not contiguous from 0"));
        }
        Self::from_names(lines.into_iter().map(|l| l.feature).collect())
    }
}

/// Assigns ids to every feature string in first-seen order and freezes the
/// dictionary.
pub fn build_feature_dict<S: AsRef<str>>(corpus: &[(Vec<S>, Vec<PosTag>)]) -> Result<FeatureDictionary> {
    let mut dict = FeatureDictionary::new();
    for (tokens, pos) in corpus {
        for feats in sequence_features(tokens, pos)? {
            for f in &feats {
                dict.insert(f)?;
            }
        }
    }
    dict.freeze();
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn feature<'a>(feats: &'a [String], template: &str) -> &'a str {
        feats
            .iter()
            .find_map(|f| parse_feature(f).filter(|(t, _)| *t == template).map(|(_, v)| v))
            .unwrap()
    }

    #[test]
    fn heuristic_rules() {
        assert_eq!(pos_tag(&["12"], None).unwrap(), vec![PosTag::Num]);
        assert_eq!(pos_tag(&["."], None).unwrap(), vec![PosTag::Punct]);
        assert_eq!(
            pos_tag(&["had", "lupus", "quickly"], None).unwrap(),
            vec![PosTag::Verb, PosTag::Noun, PosTag::Adv]
        );
        assert_eq!(heuristic_tag("%"), PosTag::Sym);
        assert_eq!(heuristic_tag("3.5"), PosTag::Num);
        assert_eq!(heuristic_tag("medication"), PosTag::Noun);
    }

    #[test]
    fn provided_tags_pass_through() {
        let tags = [PosTag::Propn, PosTag::Intj];
        assert_eq!(pos_tag(&["a", "b"], Some(&tags)).unwrap(), tags.to_vec());
        assert!(pos_tag(&["a"], Some(&tags)).is_err());
    }

    #[test]
    fn tag_names_roundtrip() {
        for tag in PosTag::ALL {
            assert_eq!(tag.as_str().parse::<PosTag>().unwrap(), tag);
        }
        assert!("FOO".parse::<PosTag>().is_err());
    }

    #[test]
    fn single_token_window_is_all_sentinels() {
        let feats = extract_features(&["pain"], &[PosTag::Noun], 0).unwrap();
        assert_eq!(feats.len(), 18);
        for d in WINDOW {
            let name = offset_name(d);
            let expect = if d < 0 { format!("BOS@{name}") } else { format!("EOS@{name}") };
            assert_eq!(feature(&feats, &format!("word@{name}")), expect);
            assert_eq!(feature(&feats, &format!("pos@{name}")), expect);
        }
    }

    #[test]
    fn orthographic_predicates() {
        let feats = extract_features(&["IBS"], &[PosTag::Noun], 0).unwrap();
        assert_eq!(feature(&feats, "is_upper"), "1");
        assert_eq!(feature(&feats, "is_alnum"), "1");
        assert_eq!(feature(&feats, "is_title"), "0");
        assert_eq!(feature(&feats, "word"), "ibs");
        assert!(is_title("Lupus"));
        assert!(!is_title("lupus"));
        assert!(!is_upper("12"));
        assert!(!is_alnum("sub-Q"));
    }

    #[test]
    fn numeric_in_context() {
        let toks = words(". I had lupus erythematosus for 12 years the pain was bad . We");
        let pos = pos_tag(&toks, None).unwrap();
        let feats = extract_features(&toks, &pos, 6).unwrap();
        assert_eq!(feature(&feats, "is_numeric"), "1");
        assert_eq!(feature(&feats, "word@-1"), "for");
        assert_eq!(feature(&feats, "word@+1"), "years");
        assert_eq!(feature(&feats, "pos"), "NUM");
    }

    #[test]
    fn index_out_of_range() {
        assert!(extract_features(&["a"], &[PosTag::Noun], 1).is_err());
    }

    #[test]
    fn every_feature_parses() {
        let toks = words("Took 5 mg , felt better");
        let pos = pos_tag(&toks, None).unwrap();
        for feats in sequence_features(&toks, &pos).unwrap() {
            for f in feats {
                let (template, value) = parse_feature(&f).unwrap();
                assert!(!template.is_empty() && !value.is_empty(), "{f}");
            }
        }
    }

    #[test]
    fn dictionary_matches_set_oracle() {
        let corpus: Vec<(Vec<String>, Vec<PosTag>)> = ["the pain was bad", "pain relief with ibuprofen ."]
            .iter()
            .map(|s| {
                let toks = words(s);
                let pos = pos_tag(&toks, None).unwrap();
                (toks, pos)
            })
            .collect();
        let dict = build_feature_dict(&corpus).unwrap();
        let mut oracle = HashSet::new();
        for (toks, pos) in &corpus {
            for i in 0..toks.len() {
                oracle.extend(extract_features(toks, pos, i).unwrap());
            }
        }
        assert_eq!(dict.len(), oracle.len());
        assert!(dict.is_frozen());
        assert_eq!(build_feature_dict(&corpus).unwrap(), dict);
        for (id, name) in dict.names().iter().enumerate() {
            assert_eq!(dict.get(name), Some(id as u32));
        }
    }

    #[test]
    fn empty_corpus_gives_empty_dictionary() {
        let corpus: Vec<(Vec<String>, Vec<PosTag>)> = vec![(vec![], vec![])];
        assert!(build_feature_dict(&corpus).unwrap().is_empty());
    }

    #[test]
    fn frozen_dictionary_rejects_new_features() {
        let mut dict = FeatureDictionary::new();
        dict.insert("a=1").unwrap();
        dict.freeze();
        assert_eq!(dict.insert("a=1").unwrap(), 0);
        assert!(dict.insert("b=1").is_err());
        assert_eq!(dict.vectorize(&["b=1", "a=1", "a=1"]), vec![0]);
    }

    #[test]
    fn dictionary_jsonl_roundtrip() {
        let mut dict = FeatureDictionary::new();
        for f in ["word=a", "pos=NOUN", "is_upper=0"] {
            dict.insert(f).unwrap();
        }
        dict.freeze();
        let mut buf = Vec::new();
        dict.write_jsonl(&mut buf).unwrap();
        let back = FeatureDictionary::read_jsonl(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, dict);
        assert_eq!(back.content_hash(), dict.content_hash());
    }

    #[test]
    fn shift_equivariance() {
        let toks = words("my skin improved after the cream");
        let pos = pos_tag(&toks, None).unwrap();
        let mut shifted = words("honestly though");
        shifted.extend(toks.iter().cloned());
        let shifted_pos = pos_tag(&shifted, None).unwrap();
        // positions far enough from the new prefix see identical windows
        for i in 3..toks.len() {
            assert_eq!(
                extract_features(&toks, &pos, i).unwrap(),
                extract_features(&shifted, &shifted_pos, i + 2).unwrap()
            );
        }
    }
}
