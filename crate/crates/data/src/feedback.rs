//! Preference triples from responses labeled acceptable or unacceptable.

use serde::{Deserialize, Serialize};

use clinlm_core::dpo::DpoTriple;

use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Acceptable,
    Unacceptable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feedback {
    pub prompt: String,
    pub response: String,
    pub label: Label,
}

pub const STAGE: &str = "dpo";

/// For each prompt, every acceptable response paired with every
/// unacceptable one. Prompts appear in first-seen order and pairs keep input
/// order. Prompts lacking either side, and pairs whose two responses are
/// identical, are counted in the report instead.
pub fn build_dpo_dataset(feedback: &[Feedback]) -> (Vec<DpoTriple>, Report) {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: std::collections::HashMap<&str, (Vec<&str>, Vec<&str>)> = Default::default();
    for f in feedback {
        let g = groups.entry(f.prompt.as_str()).or_insert_with(|| {
            order.push(f.prompt.as_str());
            Default::default()
        });
        match f.label {
            Label::Acceptable => g.0.push(&f.response),
            Label::Unacceptable => g.1.push(&f.response),
        }
    }
    let mut triples = Vec::new();
    let mut report = Report::default();
    for prompt in order {
        let (good, bad) = &groups[prompt];
        if good.is_empty() || bad.is_empty() {
            let reason = if good.is_empty() { "no-acceptable-response" } else { "no-unacceptable-response" };
            report.add(STAGE, prompt, reason, 1);
            continue;
        }
        for chosen in good {
            for rejected in bad {
                if chosen == rejected {
                    report.add(STAGE, prompt, "identical-pair", 1);
                    continue;
                }
                triples.push(DpoTriple {
                    prompt: prompt.to_string(),
                    chosen: chosen.to_string(),
                    rejected: rejected.to_string(),
                });
            }
        }
    }
    (triples, report)
}
