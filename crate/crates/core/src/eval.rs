//! Precision@k with graded relevance judgments, and per-grade count tables.
//!
//! Grades run 0 (irrelevant) to 3 (highly relevant). Unjudged documents are
//! treated as grade 0.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::run::RankedList;

pub const MAX_GRADE: u8 = 3;
pub const DEFAULT_THRESHOLD: u8 = 2;
pub const GRADE_NAMES: [&str; 4] = ["Irrelevant", "Somewhat Relevant", "Relevant", "Highly Relevant"];
pub const UNJUDGED_POLICY: &str = "unjudged documents count as grade 0";

/// Relevance grades keyed by `(query id, doc id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    grades: HashMap<String, HashMap<String, u8>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u8) -> Result<()> {
        if grade > MAX_GRADE {
            return Err(Error::InvalidArgument(format!("grade {grade} outside 0..={MAX_GRADE}")));
        }
        let docs = self.grades.entry(query_id.to_string()).or_default();
        if docs.insert(doc_id.to_string(), grade).is_some() {
            return Err(Error::DuplicateId(format!("{query_id}/{doc_id}")));
        }
        Ok(())
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u8 {
        self.grades
            .get(query_id)
            .and_then(|docs| docs.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses `query_id TAB doc_id TAB grade` lines.
    pub fn read<R: BufRead>(input: R, source_name: &str) -> Result<Self> {
        let mut qrels = Qrels::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(source_name, lineno, format!("expected 3 columns, found {}", cols.len())));
            }
            let grade: u8 = cols[2].trim().parse().map_err(|e| Error::parse(source_name, lineno, e))?;
            qrels
                .insert(cols[0], cols[1], grade)
                .map_err(|e| Error::parse(source_name, lineno, e))?;
        }
        Ok(qrels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMode {
    /// Per-query precision with short lists padded to `k`, averaged.
    #[default]
    MeanPerQuery,
    /// Relevant retrieved over retrieved, pooled across queries.
    Pooled,
}

impl FromStr for PrecisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "mean_per_query" => Ok(PrecisionMode::MeanPerQuery),
            "pooled" => Ok(PrecisionMode::Pooled),
            other => Err(Error::InvalidArgument(format!("unknown precision mode `{other}`"))),
        }
    }
}

fn relevant_in_top(list: &RankedList, qrels: &Qrels, k: usize, threshold: u8) -> usize {
    list.results
        .iter()
        .take(k)
        .filter(|r| qrels.grade(&list.query_id, &r.doc_id) >= threshold)
        .count()
}

/// Mean over queries of `relevant in top k / k`.
pub fn precision_at_k(runs: &[RankedList], qrels: &Qrels, k: usize, threshold: u8) -> Result<f64> {
    precision_at_k_with(runs, qrels, k, threshold, PrecisionMode::MeanPerQuery)
}

pub fn precision_at_k_with(runs: &[RankedList], qrels: &Qrels, k: usize, threshold: u8, mode: PrecisionMode) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if runs.is_empty() {
        return Err(Error::InvalidArgument("empty run".into()));
    }
    Ok(match mode {
        PrecisionMode::MeanPerQuery => {
            runs.iter()
                .map(|l| relevant_in_top(l, qrels, k, threshold) as f64 / k as f64)
                .sum::<f64>()
                / runs.len() as f64
        }
        PrecisionMode::Pooled => {
            let relevant: usize = runs.iter().map(|l| relevant_in_top(l, qrels, k, threshold)).sum();
            let retrieved: usize = runs.iter().map(|l| l.len().min(k)).sum();
            if retrieved == 0 {
                0.0
            } else {
                relevant as f64 / retrieved as f64
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub k: usize,
    pub precision: f64,
    /// Number of retrieved documents per grade within the top `k`, summed
    /// over queries; index is the grade.
    pub grade_counts: [u64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub query_count: usize,
    pub threshold: u8,
    pub mode: PrecisionMode,
    pub unjudged: String,
    pub cutoffs: Vec<CutoffReport>,
}

pub fn graded_counts(runs: &[RankedList], qrels: &Qrels, ks: &[usize]) -> Result<EvalReport> {
    evaluate(runs, qrels, ks, DEFAULT_THRESHOLD, PrecisionMode::MeanPerQuery)
}

/// Per-grade counts and precision at every cutoff in `ks`.
pub fn evaluate(runs: &[RankedList], qrels: &Qrels, ks: &[usize], threshold: u8, mode: PrecisionMode) -> Result<EvalReport> {
    if ks.iter().any(|&k| k == 0) {
        return Err(Error::InvalidArgument("every k must be at least 1".into()));
    }
    let cutoffs = ks
        .iter()
        .map(|&k| {
            let mut grade_counts = [0u64; 4];
            for list in runs {
                for r in list.results.iter().take(k) {
                    grade_counts[qrels.grade(&list.query_id, &r.doc_id) as usize] += 1;
                }
            }
            let precision = if runs.is_empty() {
                0.0
            } else {
                precision_at_k_with(runs, qrels, k, threshold, mode)?
            };
            Ok(CutoffReport {
                k,
                precision,
                grade_counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        query_count: runs.len(),
        threshold,
        mode,
        unjudged: UNJUDGED_POLICY.to_string(),
        cutoffs,
    })
}

impl EvalReport {
    /// Aligned text table: one row per grade (highest first) and a
    /// precision row, one column per cutoff.
    pub fn to_table(&self) -> String {
        let label_width = GRADE_NAMES.iter().map(|n| n.len()).max().unwrap_or(0).max("Precision".len());
        let cells: Vec<Vec<String>> = self
            .cutoffs
            .iter()
            .map(|c| {
                let mut col: Vec<String> = (0..=MAX_GRADE as usize).rev().map(|g| c.grade_counts[g].to_string()).collect();
                col.push(format!("{:.4}", c.precision));
                col
            })
            .collect();
        let widths: Vec<usize> = self
            .cutoffs
            .iter()
            .zip(&cells)
            .map(|(c, col)| col.iter().map(String::len).max().unwrap_or(0).max(c.k.to_string().len()))
            .collect();

        let mut out = String::new();
        let _ = write!(out, "{:<label_width$}", "k");
        for (c, w) in self.cutoffs.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", c.k);
        }
        out.push('\n');
        let row_names = GRADE_NAMES.iter().rev().copied().chain(std::iter::once("Precision"));
        for (row, name) in row_names.enumerate() {
            let _ = write!(out, "{name:<label_width$}");
            for (col, w) in cells.iter().zip(&widths) {
                let _ = write!(out, "  {:>w$}", col[row]);
            }
            out.push('\n');
        }
        out
    }
}
