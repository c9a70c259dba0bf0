//! Ranked result lists and their tab-separated run-file form:
//! `query_id TAB doc_id TAB rank TAB score`, ranks starting at 1.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Results for one query in descending score order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub results: Vec<ScoredDoc>,
}

/// Descending score, then ascending doc id.
pub(crate) fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

impl RankedList {
    /// Sorts `results` into rank order and keeps the first `k`.
    pub fn from_unsorted(query_id: impl Into<String>, mut results: Vec<ScoredDoc>, k: usize) -> Self {
        if k < results.len() {
            results.select_nth_unstable_by(k, rank_order);
            results.truncate(k);
        }
        results.sort_by(rank_order);
        Self {
            query_id: query_id.into(),
            results,
        }
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.results.iter().map(|r| r.doc_id.as_str())
    }
}

pub fn write_run<W: Write>(mut out: W, lists: &[RankedList]) -> Result<()> {
    for list in lists {
        for (rank, r) in list.results.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}\t{}", list.query_id, r.doc_id, rank + 1, r.score)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Parses a run file, grouping rows by query in first-seen order and
/// ordering each query's rows by rank.
pub fn read_run<R: BufRead>(input: R, source_name: &str) -> Result<Vec<RankedList>> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(usize, ScoredDoc)>> = HashMap::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::parse(source_name, lineno, format!("expected 4 columns, found {}", cols.len())));
        }
        let rank: usize = cols[2].trim().parse().map_err(|e| Error::parse(source_name, lineno, e))?;
        let score: f64 = cols[3].trim().parse().map_err(|e| Error::parse(source_name, lineno, e))?;
        if rank == 0 {
            return Err(Error::parse(source_name, lineno, "ranks start at 1"));
        }
        let query = cols[0].to_string();
        if !rows.contains_key(&query) {
            order.push(query.clone());
        }
        rows.entry(query).or_default().push((
            rank,
            ScoredDoc {
                doc_id: cols[1].to_string(),
                score,
            },
        ));
    }
    Ok(order
        .into_iter()
        .map(|q| {
            let mut r = rows.remove(&q).unwrap_or_default();
            r.sort_by_key(|(rank, _)| *rank);
            RankedList {
                query_id: q,
                results: r.into_iter().map(|(_, d)| d).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, score: f64) -> ScoredDoc {
        ScoredDoc {
            doc_id: id.into(),
            score,
        }
    }

    #[test]
    fn ordering_and_truncation() {
        let list = RankedList::from_unsorted("q", vec![doc("c", 1.0), doc("b", 2.0), doc("a", 1.0), doc("d", 0.5)], 3);
        assert_eq!(list.doc_ids().collect::<Vec<_>>(), vec!["b", "a", "c"]);
    }

    #[test]
    fn run_file_roundtrip() {
        let lists = vec![
            RankedList::from_unsorted("q2", vec![doc("x", 0.1 + 0.2), doc("y", -1.5e-7)], 10),
            RankedList::from_unsorted("q1", vec![doc("z", 3.0)], 10),
        ];
        let mut buf = Vec::new();
        write_run(&mut buf, &lists).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("q2\tx\t1\t0.30000000000000004\n"));
        assert_eq!(read_run(buf.as_slice(), "run").unwrap(), lists);
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(read_run("q\td\t1\n".as_bytes(), "r"), Err(Error::Parse { line: 1, .. })));
        assert!(read_run("q\td\t0\t1.0\n".as_bytes(), "r").is_err());
        assert!(read_run("q\td\tx\t1.0\n".as_bytes(), "r").is_err());
    }
}
