//! Supervised fine-tuning records and their provenance.

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Public,
    SynthesizedDrug,
    SynthesizedGuideline,
    SynthesizedComplaint,
    Safety,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftRecord {
    pub prompt: String,
    pub response: String,
    pub origin: Origin,
}

impl SftRecord {
    pub fn validate(&self) -> Result<()> {
        if self.prompt.trim().is_empty() || self.response.trim().is_empty() {
            return Err(DataError::Record(format!(
                "sft record with empty prompt or response (origin {:?})",
                self.origin
            )));
        }
        Ok(())
    }
}

/// A record with the id of the input it was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sourced {
    pub record: SftRecord,
    pub source: String,
}

/// One line of the provenance sidecar; `line` is the 1-based line of the
/// record in the dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceLine {
    pub line: usize,
    pub origin: Origin,
    pub source: String,
}

/// The dataset file and its provenance sidecar, line for line.
pub fn render(records: &[Sourced]) -> (String, String) {
    let data: Vec<&SftRecord> = records.iter().map(|s| &s.record).collect();
    let prov: Vec<ProvenanceLine> = records
        .iter()
        .enumerate()
        .map(|(i, s)| ProvenanceLine { line: i + 1, origin: s.record.origin, source: s.source.clone() })
        .collect();
    (crate::jsonl::to_string(&data), crate::jsonl::to_string(&prov))
}

/// An input line for already-written pairs such as public instruction data
/// or safety prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairInput {
    pub prompt: String,
    pub response: String,
}

/// Tags external pairs with `origin`; their source id is
/// `<source_name>:<index>` with a 1-based index.
pub fn ingest_pairs(pairs: Vec<PairInput>, origin: Origin, source_name: &str) -> Result<Vec<Sourced>> {
    pairs
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let record = SftRecord { prompt: p.prompt, response: p.response, origin };
            record.validate()?;
            Ok(Sourced { record, source: format!("{source_name}:{}", i + 1) })
        })
        .collect()
}
