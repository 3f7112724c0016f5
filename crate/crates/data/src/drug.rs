//! Template question-answer pairs from structured drug records.

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::sft::{Origin, SftRecord, Sourced};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrugRecord {
    pub name: String,
    #[serde(default)]
    pub indications: Vec<String>,
    #[serde(default)]
    pub contraindications: Vec<String>,
    #[serde(default)]
    pub adverse_reactions: Vec<String>,
    #[serde(default)]
    pub dosage: String,
}

fn filled(items: &[String]) -> bool {
    items.iter().any(|s| !s.trim().is_empty())
}

fn join(items: &[String]) -> String {
    items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect::<Vec<_>>().join("；")
}

impl DrugRecord {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(DataError::Record("drug record without a name".into()));
        }
        if !(filled(&self.indications)
            || filled(&self.contraindications)
            || filled(&self.adverse_reactions)
            || !self.dosage.trim().is_empty())
        {
            return Err(DataError::Record(format!("drug `{}` has no content fields", self.name)));
        }
        Ok(())
    }
}

/// One pair per non-empty field, in the order indications,
/// contraindications, adverse reactions, dosage.
pub fn synthesize_drug_qa(record: &DrugRecord) -> Result<Vec<SftRecord>> {
    record.validate()?;
    let name = record.name.trim();
    let mut out = Vec::new();
    let mut push =
        |prompt: String, response: String| out.push(SftRecord { prompt, response, origin: Origin::SynthesizedDrug });
    if filled(&record.indications) {
        push(format!("{name}的适应症是什么？"), join(&record.indications));
    }
    if filled(&record.contraindications) {
        push(format!("{name}的禁忌症有哪些？"), join(&record.contraindications));
    }
    if filled(&record.adverse_reactions) {
        push(format!("{name}有哪些不良反应？"), join(&record.adverse_reactions));
    }
    if !record.dosage.trim().is_empty() {
        push(format!("{name}的用法用量是什么？"), record.dosage.trim().to_string());
    }
    Ok(out)
}

/// Pairs for a whole file of records; the source of each pair is
/// `drug:<line>` where `line` is the record's 1-based position.
pub fn synthesize_all(records: &[DrugRecord]) -> Result<Vec<Sourced>> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        for record in synthesize_drug_qa(r)? {
            out.push(Sourced { record, source: format!("drug:{}", i + 1) });
        }
    }
    Ok(out)
}
