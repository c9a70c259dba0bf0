//! Tokenization, BIO label encoding for the claim and PIO tasks, label
//! repair and token-level scoring.
//!
//! Labels follow IOB2: every span starts with a `B` label. Spans are given
//! as character offsets and are snapped to whole tokens when encoded, so a
//! span that only partially covers a token claims the entire token.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CharSpan, PioCategory};
use crate::error::{Error, Result};

/// A token with character offsets into its source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.start, self.end)
    }

    /// True when every character of the token is punctuation.
    pub fn is_punct(&self) -> bool {
        self.text.chars().all(is_punct_char)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

pub(crate) fn is_punct_char(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits on whitespace, then detaches leading and trailing punctuation
/// characters into single-character tokens. Word-internal punctuation such
/// as hyphens and apostrophes stays inside the word.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let chunk_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let chunk_end = i;

        let mut lead = chunk_start;
        while lead < chunk_end && is_punct_char(chars[lead]) {
            lead += 1;
        }
        let mut trail = chunk_end;
        while trail > lead && is_punct_char(chars[trail - 1]) {
            trail -= 1;
        }

        let mut push = |s: usize, e: usize| {
            tokens.push(Token {
                text: chars[s..e].iter().collect(),
                start: s,
                end: e,
            })
        };
        for p in chunk_start..lead {
            push(p, p + 1);
        }
        if lead < trail {
            push(lead, trail);
        }
        for p in trail.max(lead)..chunk_end {
            push(p, p + 1);
        }
    }
    tokens
}

/// Builds tokens from pre-split strings, laying them out as if joined by a
/// single space. Used when only token strings are available (CoNLL input).
pub fn tokens_from_words<S: AsRef<str>>(words: &[S]) -> Vec<Token> {
    let mut offset = 0;
    words
        .iter()
        .map(|w| {
            let w = w.as_ref();
            let len = w.chars().count();
            let tok = Token {
                text: w.to_string(),
                start: offset,
                end: offset + len,
            };
            offset += len + 1;
            tok
        })
        .collect()
}

/// Which labelling task a sequence belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Claim,
    Pio,
}

impl Scheme {
    /// Labels of this scheme in id order. `O` is always id 0.
    pub fn labels(self) -> Vec<Label> {
        match self {
            Scheme::Claim => vec![Label::Outside, Label::Begin(None), Label::Inside(None)],
            Scheme::Pio => {
                let mut out = vec![Label::Outside];
                for cat in PioCategory::ALL {
                    out.push(Label::Begin(Some(cat)));
                    out.push(Label::Inside(Some(cat)));
                }
                out
            }
        }
    }

    pub fn num_labels(self) -> usize {
        match self {
            Scheme::Claim => 3,
            Scheme::Pio => 7,
        }
    }

    /// Dense id of `label` in this scheme, if the label belongs to it.
    pub fn label_id(self, label: Label) -> Option<usize> {
        let cat_offset = |c: PioCategory| match c {
            PioCategory::Population => 1,
            PioCategory::Intervention => 3,
            PioCategory::Outcome => 5,
        };
        match (self, label) {
            (_, Label::Outside) => Some(0),
            (Scheme::Claim, Label::Begin(None)) => Some(1),
            (Scheme::Claim, Label::Inside(None)) => Some(2),
            (Scheme::Pio, Label::Begin(Some(c))) => Some(cat_offset(c)),
            (Scheme::Pio, Label::Inside(Some(c))) => Some(cat_offset(c) + 1),
            _ => None,
        }
    }

    pub fn label(self, id: usize) -> Option<Label> {
        self.labels().get(id).copied()
    }

    fn accepts_category(self, category: Option<PioCategory>) -> bool {
        matches!(
            (self, category),
            (Scheme::Claim, None) | (Scheme::Pio, Some(_))
        )
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Claim => "claim",
            Scheme::Pio => "pio",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "claim" => Ok(Scheme::Claim),
            "pio" => Ok(Scheme::Pio),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

/// A single BIO label, optionally typed with a PIO category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Outside,
    Begin(Option<PioCategory>),
    Inside(Option<PioCategory>),
}

impl Label {
    pub fn is_outside(self) -> bool {
        self == Label::Outside
    }

    pub fn category(self) -> Option<PioCategory> {
        match self {
            Label::Outside => None,
            Label::Begin(c) | Label::Inside(c) => c,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (prefix, cat) = match self {
            Label::Outside => return f.write_str("O"),
            Label::Begin(c) => ("B", c),
            Label::Inside(c) => ("I", c),
        };
        match cat {
            None => f.write_str(prefix),
            Some(c) => write!(f, "{prefix}-{}", c.short_name()),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown label `{s}`"));
        let (prefix, cat) = match s.split_once('-') {
            Some((p, c)) => (p, Some(PioCategory::from_short_name(c).ok_or_else(bad)?)),
            None => (s, None),
        };
        match (prefix, cat) {
            ("O", None) => Ok(Label::Outside),
            ("B", c) => Ok(Label::Begin(c)),
            ("I", c) => Ok(Label::Inside(c)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-token labels of one scheme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub scheme: Scheme,
    pub labels: Vec<Label>,
}

impl LabelSequence {
    /// Builds a sequence, rejecting labels that do not belong to `scheme`.
    pub fn new(scheme: Scheme, labels: Vec<Label>) -> Result<Self> {
        if let Some(pos) = labels.iter().position(|l| scheme.label_id(*l).is_none()) {
            return Err(Error::InvalidLabels {
                position: pos,
                message: format!("label {} is not part of the {scheme} scheme", labels[pos]),
            });
        }
        Ok(Self { scheme, labels })
    }

    pub fn outside(scheme: Scheme, len: usize) -> Self {
        Self {
            scheme,
            labels: vec![Label::Outside; len],
        }
    }

    pub fn from_ids(scheme: Scheme, ids: &[usize]) -> Result<Self> {
        let labels = ids
            .iter()
            .enumerate()
            .map(|(pos, &id)| {
                scheme.label(id).ok_or_else(|| Error::InvalidLabels {
                    position: pos,
                    message: format!("label id {id} out of range for the {scheme} scheme"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scheme, labels })
    }

    pub fn ids(&self) -> Vec<usize> {
        self.labels
            .iter()
            .map(|l| self.scheme.label_id(*l).expect("label checked on construction"))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Position of the first `I-x` not preceded by `B-x` or `I-x`.
    pub fn first_violation(&self) -> Option<usize> {
        let mut prev = Label::Outside;
        for (pos, &label) in self.labels.iter().enumerate() {
            if let Label::Inside(cat) = label {
                let continues = matches!(prev, Label::Begin(c) | Label::Inside(c) if c == cat);
                if !continues {
                    return Some(pos);
                }
            }
            prev = label;
        }
        None
    }

    pub fn is_valid(&self) -> bool {
        self.first_violation().is_none()
    }
}

/// A span paired with its PIO category; claim spans carry `None`.
pub type TypedSpan = (CharSpan, Option<PioCategory>);

/// Encodes `spans` over `tokens` as IOB2 labels.
///
/// A token intersecting a span takes `B` if it is the first token of that
/// span and `I` otherwise. A token already claimed by an earlier span keeps
/// its label.
pub fn spans_to_bio(tokens: &[Token], spans: &[TypedSpan], scheme: Scheme) -> Result<LabelSequence> {
    let mut sorted: Vec<&TypedSpan> = spans.iter().collect();
    sorted.sort_by_key(|(s, _)| (s.start, s.end));
    for pair in sorted.windows(2) {
        if pair[0].0.overlaps(&pair[1].0) {
            return Err(Error::OverlappingSpans {
                first: pair[0].0,
                second: pair[1].0,
            });
        }
    }

    let mut labels = vec![Label::Outside; tokens.len()];
    let mut cursor = 0;
    for (span, category) in sorted {
        if !scheme.accepts_category(*category) {
            return Err(Error::InvalidArgument(format!(
                "span {span} has category {category:?}, not valid for the {scheme} scheme"
            )));
        }
        // tokens are ordered, so scanning resumes from the first token that
        // could still intersect the current span
        while cursor < tokens.len() && tokens[cursor].end <= span.start {
            cursor += 1;
        }
        let mut first = true;
        let mut t = cursor;
        while t < tokens.len() && tokens[t].start < span.end {
            if tokens[t].end > span.start && labels[t].is_outside() {
                labels[t] = if first {
                    Label::Begin(*category)
                } else {
                    Label::Inside(*category)
                };
                first = false;
            }
            t += 1;
        }
    }
    Ok(LabelSequence { scheme, labels })
}

/// Decodes each maximal `B-x I-x*` run into one token-snapped span.
pub fn bio_to_spans(tokens: &[Token], labels: &LabelSequence) -> Result<Vec<TypedSpan>> {
    if tokens.len() != labels.len() {
        return Err(Error::LengthMismatch {
            index: 0,
            expected: tokens.len(),
            found: labels.len(),
        });
    }
    if let Some(position) = labels.first_violation() {
        return Err(Error::InvalidLabels {
            position,
            message: format!("{} does not continue a span; repair the sequence first", labels.labels[position]),
        });
    }

    let mut spans = Vec::new();
    let mut open: Option<(usize, usize, Option<PioCategory>)> = None;
    for (tok, &label) in tokens.iter().zip(&labels.labels) {
        match label {
            Label::Begin(cat) => {
                if let Some((s, e, c)) = open.take() {
                    spans.push((CharSpan::new(s, e), c));
                }
                open = Some((tok.start, tok.end, cat));
            }
            Label::Inside(_) => {
                if let Some(run) = open.as_mut() {
                    run.1 = tok.end;
                }
            }
            Label::Outside => {
                if let Some((s, e, c)) = open.take() {
                    spans.push((CharSpan::new(s, e), c));
                }
            }
        }
    }
    if let Some((s, e, c)) = open {
        spans.push((CharSpan::new(s, e), c));
    }
    Ok(spans)
}

/// IOB2 repair: an `I-x` that does not continue a span becomes `B-x`.
pub fn repair_labels(labels: &LabelSequence) -> LabelSequence {
    let mut out = labels.labels.clone();
    let mut prev = Label::Outside;
    for label in &mut out {
        if let Label::Inside(cat) = *label {
            let continues = matches!(prev, Label::Begin(c) | Label::Inside(c) if c == cat);
            if !continues {
                *label = Label::Begin(cat);
            }
        }
        prev = *label;
    }
    LabelSequence {
        scheme: labels.scheme,
        labels: out,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Micro,
    Macro,
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "micro" => Ok(Averaging::Micro),
            "macro" => Ok(Averaging::Macro),
            other => Err(Error::InvalidArgument(format!("unknown averaging `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of gold tokens carrying the label.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub averaging: Averaging,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_label: BTreeMap<String, LabelScore>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Token-level precision, recall and F1 where every non-`O` label is a
/// positive class.
///
/// Micro averaging pools counts over all tokens. Macro averaging takes the
/// mean per-label precision and recall over labels seen in gold or
/// predictions; F1 is their harmonic mean in both modes.
pub fn token_prf(gold: &[LabelSequence], pred: &[LabelSequence], averaging: Averaging) -> Result<PrfReport> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gold sequences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }

    #[derive(Default)]
    struct Counts {
        tp: usize,
        pred: usize,
        gold: usize,
    }
    let mut per_label: BTreeMap<Label, Counts> = BTreeMap::new();
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::LengthMismatch {
                index,
                expected: g.len(),
                found: p.len(),
            });
        }
        for (&gl, &pl) in g.labels.iter().zip(&p.labels) {
            if !gl.is_outside() {
                per_label.entry(gl).or_default().gold += 1;
            }
            if !pl.is_outside() {
                let entry = per_label.entry(pl).or_default();
                entry.pred += 1;
                if pl == gl {
                    entry.tp += 1;
                }
            }
        }
    }

    let breakdown: BTreeMap<String, LabelScore> = per_label
        .iter()
        .map(|(label, c)| {
            let precision = ratio(c.tp, c.pred);
            let recall = ratio(c.tp, c.gold);
            (
                label.to_string(),
                LabelScore {
                    precision,
                    recall,
                    f1: harmonic(precision, recall),
                    support: c.gold,
                },
            )
        })
        .collect();

    let (precision, recall) = match averaging {
        Averaging::Micro => {
            let tp = per_label.values().map(|c| c.tp).sum();
            let npred = per_label.values().map(|c| c.pred).sum();
            let ngold = per_label.values().map(|c| c.gold).sum();
            (ratio(tp, npred), ratio(tp, ngold))
        }
        Averaging::Macro => {
            let n = breakdown.len();
            if n == 0 {
                (0.0, 0.0)
            } else {
                (
                    breakdown.values().map(|s| s.precision).sum::<f64>() / n as f64,
                    breakdown.values().map(|s| s.recall).sum::<f64>() / n as f64,
                )
            }
        }
    };

    Ok(PrfReport {
        averaging,
        precision,
        recall,
        f1: harmonic(precision, recall),
        per_label: breakdown,
    })
}

/// One sentence of a CoNLL-style file: tokens, labels and optional POS tags.
#[derive(Debug, Clone, PartialEq)]
pub struct ConllSentence {
    pub tokens: Vec<String>,
    pub labels: LabelSequence,
    pub pos: Option<Vec<String>>,
}

/// Writes `token TAB label [TAB pos]` lines, one blank line between sentences.
pub fn write_conll<W: Write>(mut out: W, sentences: &[ConllSentence]) -> Result<()> {
    for sentence in sentences {
        for (i, (tok, label)) in sentence.tokens.iter().zip(&sentence.labels.labels).enumerate() {
            match &sentence.pos {
                Some(pos) => writeln!(out, "{tok}\t{label}\t{}", pos[i])?,
                None => writeln!(out, "{tok}\t{label}")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads the format produced by [`write_conll`]. A third column, when
/// present on every line of a sentence, is returned as POS tags.
pub fn read_conll<R: BufRead>(input: R, scheme: Scheme, source_name: &str) -> Result<Vec<ConllSentence>> {
    struct Pending {
        tokens: Vec<String>,
        labels: Vec<Label>,
        pos: Vec<String>,
        start_line: usize,
    }
    let mut sentences = Vec::new();
    let mut pending = Pending {
        tokens: Vec::new(),
        labels: Vec::new(),
        pos: Vec::new(),
        start_line: 1,
    };
    let flush = |p: &mut Pending, sentences: &mut Vec<ConllSentence>| -> Result<()> {
        if p.tokens.is_empty() {
            return Ok(());
        }
        let pos = if p.pos.len() == p.tokens.len() {
            Some(std::mem::take(&mut p.pos))
        } else if p.pos.is_empty() {
            None
        } else {
            return Err(Error::parse(source_name, p.start_line, "POS column present on only some lines"));
        };
        let labels = LabelSequence::new(scheme, std::mem::take(&mut p.labels))
            .map_err(|e| Error::parse(source_name, p.start_line, e))?;
        sentences.push(ConllSentence {
            tokens: std::mem::take(&mut p.tokens),
            labels,
            pos,
        });
        p.pos.clear();
        Ok(())
    };

    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            flush(&mut pending, &mut sentences)?;
            pending.start_line = lineno + 1;
            continue;
        }
        let mut cols = line.split('\t');
        let token = cols.next().unwrap_or_default();
        let label = cols
            .next()
            .ok_or_else(|| Error::parse(source_name, lineno, "missing label column"))?;
        let label: Label = label.trim().parse().map_err(|e| Error::parse(source_name, lineno, e))?;
        pending.tokens.push(token.to_string());
        pending.labels.push(label);
        if let Some(pos) = cols.next() {
            pending.pos.push(pos.trim().to_string());
        }
    }
    flush(&mut pending, &mut sentences)?;
    Ok(sentences)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    fn labels(scheme: Scheme, s: &str) -> LabelSequence {
        LabelSequence::new(scheme, s.split_whitespace().map(|l| l.parse().unwrap()).collect()).unwrap()
    }

    const CLAIM_EXAMPLE: &str = ". I had lupus erythematosus for 12 years the pain was bad . We";
    const PIO_EXAMPLE: &str = ". I had lupus erythematos , 1 year the pain was bad . We";

    fn char_offset(text: &str, needle: &str) -> usize {
        let byte = text.find(needle).unwrap();
        text[..byte].chars().count()
    }

    #[test]
    fn tokenize_basic() {
        assert!(tokenize("").is_empty());
        assert_eq!(texts(&tokenize("I had lupus.")), vec!["I", "had", "lupus", "."]);
        assert_eq!(texts(&tokenize(". I had")), vec![".", "I", "had"]);
    }

    #[test]
    fn tokenize_keeps_internal_punctuation() {
        assert_eq!(texts(&tokenize("sub-Q shots (don't)")), vec!["sub-Q", "shots", "(", "don't", ")"]);
        assert_eq!(texts(&tokenize("...")), vec![".", ".", "."]);
    }

    #[test]
    fn tokenize_offsets_are_characters() {
        let toks = tokenize("né été");
        assert_eq!((toks[1].start, toks[1].end), (3, 6));
    }

    #[test]
    fn claim_table_example() {
        let tokens = tokenize(CLAIM_EXAMPLE);
        assert_eq!(tokens.len(), 14);
        let start = char_offset(CLAIM_EXAMPLE, "I had");
        let end = char_offset(CLAIM_EXAMPLE, ". We") + 1;
        let seq = spans_to_bio(&tokens, &[(CharSpan::new(start, end), None)], Scheme::Claim).unwrap();
        assert_eq!(seq, labels(Scheme::Claim, "O B I I I I I I I I I I I O"));
    }

    #[test]
    fn pio_table_example() {
        let tokens = tokenize(CLAIM_EXAMPLE);
        let pop = char_offset(CLAIM_EXAMPLE, "lupus");
        let pain = char_offset(CLAIM_EXAMPLE, "pain");
        // "lupus erythematos" stops short of the token end and snaps outward
        let spans = vec![
            (CharSpan::new(pop, pop + "lupus erythematos".len()), Some(PioCategory::Population)),
            (CharSpan::new(pain, pain + 4), Some(PioCategory::Outcome)),
        ];
        let seq = spans_to_bio(&tokens, &spans, Scheme::Pio).unwrap();
        assert_eq!(seq, labels(Scheme::Pio, "O O O B-Pop I-Pop O O O O B-Out O O O O"));
    }

    #[test]
    fn pio_table_decodes_to_spans() {
        let tokens = tokenize(PIO_EXAMPLE);
        let seq = labels(Scheme::Pio, "O O O B-Pop I-Pop O O O O B-Out O O O O");
        let spans = bio_to_spans(&tokens, &seq).unwrap();
        let chars: Vec<char> = PIO_EXAMPLE.chars().collect();
        let got: Vec<(String, Option<PioCategory>)> = spans
            .iter()
            .map(|(s, c)| (chars[s.start..s.end].iter().collect(), *c))
            .collect();
        assert_eq!(
            got,
            vec![
                ("lupus erythematos".to_string(), Some(PioCategory::Population)),
                ("pain".to_string(), Some(PioCategory::Outcome)),
            ]
        );
    }

    #[test]
    fn no_spans_is_all_outside() {
        let tokens = tokenize("a b c");
        assert_eq!(spans_to_bio(&tokens, &[], Scheme::Pio).unwrap(), LabelSequence::outside(Scheme::Pio, 3));
        assert!(bio_to_spans(&tokens, &LabelSequence::outside(Scheme::Pio, 3)).unwrap().is_empty());
    }

    #[test]
    fn overlapping_spans_rejected() {
        let tokens = tokenize("a b c d");
        let err = spans_to_bio(
            &tokens,
            &[(CharSpan::new(0, 3), None), (CharSpan::new(2, 5), None)],
            Scheme::Claim,
        )
        .unwrap_err();
        assert!(matches!(err, Error::OverlappingSpans { .. }));
    }

    #[test]
    fn category_must_fit_scheme() {
        let tokens = tokenize("a b");
        assert!(spans_to_bio(&tokens, &[(CharSpan::new(0, 1), None)], Scheme::Pio).is_err());
        assert!(spans_to_bio(&tokens, &[(CharSpan::new(0, 1), Some(PioCategory::Outcome))], Scheme::Claim).is_err());
    }

    #[test]
    fn repair_rules() {
        assert_eq!(repair_labels(&labels(Scheme::Claim, "O I")), labels(Scheme::Claim, "O B"));
        assert_eq!(
            repair_labels(&labels(Scheme::Pio, "I-Pop I-Out")),
            labels(Scheme::Pio, "B-Pop B-Out")
        );
        let valid = labels(Scheme::Pio, "B-Int I-Int O B-Out");
        assert_eq!(repair_labels(&valid), valid);
    }

    #[test]
    fn bio_to_spans_rejects_unrepaired() {
        let tokens = tokenize("a b");
        let err = bio_to_spans(&tokens, &labels(Scheme::Claim, "O I")).unwrap_err();
        assert!(matches!(err, Error::InvalidLabels { position: 1, .. }));
    }

    #[test]
    fn label_ids_cover_scheme() {
        for scheme in [Scheme::Claim, Scheme::Pio] {
            for (id, label) in scheme.labels().into_iter().enumerate() {
                assert_eq!(scheme.label_id(label), Some(id));
                assert_eq!(label.to_string().parse::<Label>().unwrap(), label);
            }
            assert_eq!(scheme.labels().len(), scheme.num_labels());
        }
        assert!(LabelSequence::new(Scheme::Claim, vec![Label::Begin(Some(PioCategory::Outcome))]).is_err());
    }

    #[test]
    fn prf_perfect_and_partial() {
        let gold = vec![labels(Scheme::Claim, "B I O")];
        let r = token_prf(&gold, &gold, Averaging::Micro).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));

        let pred = vec![labels(Scheme::Claim, "B O O")];
        let r = token_prf(&gold, &pred, Averaging::Micro).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 0.5);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn prf_all_outside_predictions() {
        let gold = vec![labels(Scheme::Claim, "B I O")];
        let pred = vec![labels(Scheme::Claim, "O O O")];
        let r = token_prf(&gold, &pred, Averaging::Micro).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn prf_macro() {
        // B: tp 1, pred 1, gold 1 -> 1/1; I: tp 0, pred 1, gold 1 -> 0/0
        let gold = vec![labels(Scheme::Claim, "B I O")];
        let pred = vec![labels(Scheme::Claim, "B O I")];
        let r = token_prf(&gold, &pred, Averaging::Macro).unwrap();
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.per_label["I"].f1, 0.0);
    }

    #[test]
    fn prf_length_mismatch_names_sequence() {
        let gold = vec![labels(Scheme::Claim, "O"), labels(Scheme::Claim, "B I")];
        let pred = vec![labels(Scheme::Claim, "O"), labels(Scheme::Claim, "B")];
        let err = token_prf(&gold, &pred, Averaging::Micro).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { index: 1, .. }));
    }

    #[test]
    fn conll_roundtrip() {
        let sentences = vec![
            ConllSentence {
                tokens: vec!["I".into(), "had".into(), "lupus".into()],
                labels: labels(Scheme::Pio, "O O B-Pop"),
                pos: Some(vec!["PRON".into(), "VERB".into(), "NOUN".into()]),
            },
            ConllSentence {
                tokens: vec!["ok".into()],
                labels: labels(Scheme::Pio, "O"),
                pos: Some(vec!["ADJ".into()]),
            },
        ];
        let mut buf = Vec::new();
        write_conll(&mut buf, &sentences).unwrap();
        let back = read_conll(buf.as_slice(), Scheme::Pio, "mem").unwrap();
        assert_eq!(back, sentences);
    }

    #[test]
    fn conll_bad_label_reports_line() {
        let err = read_conll("a\tO\nb\tX-Foo\n".as_bytes(), Scheme::Claim, "f.tsv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
