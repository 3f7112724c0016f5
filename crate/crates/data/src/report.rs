//! Counted outcomes of dropping, skipping or excluding records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportLine {
    pub stage: String,
    pub subject: String,
    pub reason: String,
    pub count: usize,
}

/// Accumulates `(stage, subject, reason)` counts; output order is sorted, so
/// reports are stable across runs.
#[derive(Debug, Default, Clone)]
pub struct Report {
    counts: BTreeMap<(String, String, String), usize>,
}

impl Report {
    pub fn add(&mut self, stage: &str, subject: &str, reason: &str, count: usize) {
        *self.counts.entry((stage.into(), subject.into(), reason.into())).or_default() += count;
    }

    pub fn lines(&self) -> Vec<ReportLine> {
        self.counts
            .iter()
            .map(|((stage, subject, reason), &count)| ReportLine {
                stage: stage.clone(),
                subject: subject.clone(),
                reason: reason.clone(),
                count,
            })
            .collect()
    }

    pub fn count(&self, stage: &str, reason: &str) -> usize {
        self.counts.iter().filter(|((s, _, r), _)| s == stage && r == reason).map(|(_, c)| c).sum()
    }

    pub fn merge(&mut self, other: &Report) {
        for ((s, j, r), c) in &other.counts {
            self.add(s, j, r, *c);
        }
    }
}
