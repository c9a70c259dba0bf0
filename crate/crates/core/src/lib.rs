//! Toolkit for finding medical claims and PIO (population, intervention,
//! outcome) spans in social-media text and retrieving trial abstracts that
//! bear on them.
//!
//! The pipeline stages are independent modules that communicate through
//! plain data and JSONL/TSV files:
//!
//! - [`corpus`]: record types, JSONL IO, statistics, splitting, masking
//! - [`tagging`]: tokenization, BIO encoding, label repair, token P/R/F1
//! - [`features`]: CRF feature template and feature dictionary
//! - [`crf`]: linear-chain CRF inference and training
//! - [`bm25`]: inverted index, BM25 ranking, query construction
//! - [`dense`]: exact dense top-k and retriever training pairs
//! - [`eval`]: precision@k and graded count tables
//! - [`bridge`]: file contract with the external claim generator

pub mod bm25;
pub mod bridge;
pub mod corpus;
pub mod crf;
pub mod dense;
pub mod error;
pub mod eval;
pub mod features;
pub mod run;
pub mod tagging;

pub use bm25::{Bm25Index, Bm25Params, Query, QueryMode};
pub use corpus::{AnnotatedPost, CharSpan, ClaimRecord, CorpusStats, EvidenceAbstract, PioCategory};
pub use crf::{CrfModel, LabeledSequence, TrainConfig, Weights};
pub use dense::{Metric, TrainingPair, VectorStore};
pub use error::{Error, Result};
pub use eval::{EvalReport, Qrels};
pub use features::{FeatureDictionary, FeatureVector, PosTag};
pub use run::{RankedList, ScoredDoc};
pub use tagging::{Label, LabelSequence, PrfReport, Scheme, Token};
