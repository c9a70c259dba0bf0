//! File contract with the external claim generator.
//!
//! The generator reads `prompts.jsonl` ([`GenerationRequest`]) and a JSON
//! [`DecodingConfig`], and writes one [`GeneratedClaim`] per request. This
//! module owns those schemas, the decoding presets and a model-free checker
//! for the length and no-repeat-n-gram constraints of generated output.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ClaimRecord, EvidenceAbstract};
use crate::error::{Error, Result};
use crate::tagging;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt_id: String,
    #[serde(default)]
    pub populations: Vec<String>,
    #[serde(default)]
    pub interventions: Vec<String>,
    #[serde(default)]
    pub outcomes: Vec<String>,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<()> {
        let any = self
            .populations
            .iter()
            .chain(&self.interventions)
            .chain(&self.outcomes)
            .any(|e| !e.trim().is_empty());
        if any {
            Ok(())
        } else {
            Err(Error::invalid(&self.prompt_id, "populations", "no PIO element present"))
        }
    }

    /// PIO elements joined by `", "` in population, intervention, outcome order.
    pub fn render_prompt(&self) -> String {
        self.populations
            .iter()
            .chain(&self.interventions)
            .chain(&self.outcomes)
            .map(|e| e.trim())
            .filter(|e| !e.is_empty())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// One prompt per abstract, keyed by the abstract's doc id.
pub fn requests_from_evidence(abstracts: &[EvidenceAbstract]) -> Vec<GenerationRequest> {
    abstracts
        .iter()
        .map(|a| GenerationRequest {
            prompt_id: a.doc_id.clone(),
            populations: a.populations.clone(),
            interventions: a.interventions.clone(),
            outcomes: a.outcomes.clone(),
        })
        .filter(|r| r.validate().is_ok())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedClaim {
    pub prompt_id: String,
    #[serde(default)]
    pub claim: Option<String>,
    #[serde(default)]
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Contrastive,
    Multinomial,
}

/// Unit in which sequence lengths and n-grams are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    /// Word and punctuation tokens from [`tagging::tokenize`]. A subword
    /// model's own token counts are not reproducible without the model.
    Tokens,
    Bytes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub strategy: Strategy,
    pub num_beams: u32,
    pub min_length: usize,
    pub max_length: usize,
    pub temperature: f64,
    /// Passed to the generator unchanged; 0.5 is below the neutral 1.0.
    pub repetition_penalty: f64,
    pub no_repeat_ngram_size: usize,
    pub length_unit: LengthUnit,
}

impl DecodingConfig {
    /// Token-level generator settings.
    pub fn t5() -> Self {
        Self {
            strategy: Strategy::Contrastive,
            num_beams: 1,
            min_length: 28,
            max_length: 84,
            temperature: 0.8,
            repetition_penalty: 0.5,
            no_repeat_ngram_size: 3,
            length_unit: LengthUnit::Tokens,
        }
    }

    /// Byte-level generator settings.
    pub fn byt5() -> Self {
        Self {
            strategy: Strategy::Contrastive,
            num_beams: 1,
            min_length: 56,
            max_length: 256,
            temperature: 0.5,
            repetition_penalty: 0.5,
            no_repeat_ngram_size: 15,
            length_unit: LengthUnit::Bytes,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "t5" => Ok(Self::t5()),
            "byt5" => Ok(Self::byt5()),
            other => Err(Error::InvalidArgument(format!("unknown decoding preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_length > self.max_length {
            return Err(Error::InvalidArgument(format!(
                "min length {} exceeds max length {}",
                self.min_length, self.max_length
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        if self.no_repeat_ngram_size < 1 || self.num_beams < 1 {
            return Err(Error::InvalidArgument("n-gram size and beam count must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the config's JSON encoding, hex encoded.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TooShort { length: usize, min: usize },
    TooLong { length: usize, max: usize },
    RepeatedNgram { position: usize },
    Missing,
}

fn units(text: &str, unit: LengthUnit) -> Vec<Vec<u8>> {
    match unit {
        LengthUnit::Tokens => tagging::tokenize(text).into_iter().map(|t| t.text.into_bytes()).collect(),
        LengthUnit::Bytes => text.bytes().map(|b| vec![b]).collect(),
    }
}

/// Checks one generated claim against `config`'s length bounds and
/// no-repeat-n-gram constraint.
pub fn check_claim(text: &str, config: &DecodingConfig) -> Vec<Violation> {
    let seq = units(text, config.length_unit);
    let mut out = Vec::new();
    if seq.len() < config.min_length {
        out.push(Violation::TooShort {
            length: seq.len(),
            min: config.min_length,
        });
    }
    if seq.len() > config.max_length {
        out.push(Violation::TooLong {
            length: seq.len(),
            max: config.max_length,
        });
    }
    let n = config.no_repeat_ngram_size;
    if n >= 1 && seq.len() >= n {
        let mut seen = HashSet::new();
        if let Some(position) = seq.windows(n).position(|w| !seen.insert(w)) {
            out.push(Violation::RepeatedNgram { position });
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub checked: usize,
    pub generation_errors: usize,
    pub violations: Vec<(String, Violation)>,
}

impl ComplianceReport {
    pub fn is_compliant(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every output record; records carrying an `error` are counted
/// separately and not checked.
pub fn check_outputs(outputs: &[GeneratedClaim], config: &DecodingConfig) -> ComplianceReport {
    let mut report = ComplianceReport::default();
    for out in outputs {
        if out.error.is_some() {
            report.generation_errors += 1;
            continue;
        }
        report.checked += 1;
        match &out.claim {
            Some(text) => report
                .violations
                .extend(check_claim(text, config).into_iter().map(|v| (out.prompt_id.clone(), v))),
            None => report.violations.push((out.prompt_id.clone(), Violation::Missing)),
        }
    }
    report
}

/// Converts generator output back into corpus claims. The prompt id is the
/// aligned evidence doc id; failed generations are skipped.
pub fn claims_from_outputs(requests: &[GenerationRequest], outputs: &[GeneratedClaim]) -> Result<Vec<ClaimRecord>> {
    let by_id: std::collections::HashMap<&str, &GenerationRequest> =
        requests.iter().map(|r| (r.prompt_id.as_str(), r)).collect();
    outputs
        .iter()
        .filter(|o| o.error.is_none())
        .filter_map(|o| o.claim.as_ref().map(|c| (o, c)))
        .map(|(o, claim)| {
            let req = by_id
                .get(o.prompt_id.as_str())
                .ok_or_else(|| Error::UnknownDocument(o.prompt_id.clone()))?;
            Ok(ClaimRecord {
                claim_id: format!("gen-{}", o.prompt_id),
                claim_text: claim.clone(),
                populations: req.populations.clone(),
                interventions: req.interventions.clone(),
                outcomes: req.outcomes.clone(),
                evidence_doc_id: o.prompt_id.clone(),
            })
        })
        .collect()
}
