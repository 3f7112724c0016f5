//! Task registry, per-task results and the macro-average total.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

/// Benchmark tasks. The symptom-recognition task appears twice, once per
/// scoring granularity, because both figures enter the total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    #[serde(rename = "CMeEE")]
    CMeEE,
    #[serde(rename = "CMeIE")]
    CMeIE,
    #[serde(rename = "CMedCausal")]
    CMedCausal,
    #[serde(rename = "CHIP-CDEE")]
    ChipCdee,
    #[serde(rename = "CHIP-CDN")]
    ChipCdn,
    #[serde(rename = "CHIP-CTC")]
    ChipCtc,
    #[serde(rename = "KUAKE-QIC")]
    KuakeQic,
    #[serde(rename = "CHIP-STS")]
    ChipSts,
    #[serde(rename = "KUAKE-QTR")]
    KuakeQtr,
    #[serde(rename = "KUAKE-QQR")]
    KuakeQqr,
    #[serde(rename = "KUAKE-IR")]
    KuakeIr,
    #[serde(rename = "CHIP-MDCFNPC")]
    ChipMdcfnpc,
    #[serde(rename = "IMCS-V2-NER")]
    ImcsNer,
    #[serde(rename = "IMCS-V2-DAC")]
    ImcsDac,
    #[serde(rename = "IMCS-V2-SR-Utterance-Level")]
    ImcsSrUtterance,
    #[serde(rename = "IMCS-V2-SR-Dialog-Level")]
    ImcsSrDialog,
    #[serde(rename = "IMCS-V2-MRG")]
    ImcsMrg,
    #[serde(rename = "MedDG")]
    MedDg,
    #[serde(rename = "ClinicalQA")]
    ClinicalQa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// Exact span matches, pooled.
    StrictMicroF1,
    /// Exact relation triples, pooled.
    TripleF1,
    /// Exact triples, averaged over relation types.
    RelationMacroF1,
    QuadrupleF1,
    PairF1,
    /// Exact (finding, status) pairs, averaged over statuses.
    StatusMacroF1,
    MacroF1,
    Accuracy,
    MrrAt10,
    EntityF1,
    UtteranceF1,
    DialogF1,
    RougeL,
    /// Mean of sentence BLEU-4 and entity F1.
    BleuEntity,
    McqAccuracy,
}

impl TaskId {
    /// The benchmark tasks in published order, without the multiple-choice set.
    pub const BENCHMARK: [TaskId; 18] = [
        TaskId::CMeEE,
        TaskId::CMeIE,
        TaskId::CMedCausal,
        TaskId::ChipCdee,
        TaskId::ChipCdn,
        TaskId::ChipCtc,
        TaskId::KuakeQic,
        TaskId::ChipSts,
        TaskId::KuakeQtr,
        TaskId::KuakeQqr,
        TaskId::KuakeIr,
        TaskId::ChipMdcfnpc,
        TaskId::ImcsNer,
        TaskId::ImcsDac,
        TaskId::ImcsSrUtterance,
        TaskId::ImcsSrDialog,
        TaskId::ImcsMrg,
        TaskId::MedDg,
    ];

    pub fn metric(self) -> MetricKind {
        use MetricKind::*;
        match self {
            TaskId::CMeEE => StrictMicroF1,
            TaskId::CMeIE => TripleF1,
            TaskId::CMedCausal => RelationMacroF1,
            TaskId::ChipCdee => QuadrupleF1,
            TaskId::ChipCdn => PairF1,
            TaskId::ChipCtc | TaskId::ChipSts => MacroF1,
            TaskId::KuakeQic | TaskId::KuakeQtr | TaskId::KuakeQqr | TaskId::ImcsDac => Accuracy,
            TaskId::KuakeIr => MrrAt10,
            TaskId::ChipMdcfnpc => StatusMacroF1,
            TaskId::ImcsNer => EntityF1,
            TaskId::ImcsSrUtterance => UtteranceF1,
            TaskId::ImcsSrDialog => DialogF1,
            TaskId::ImcsMrg => RougeL,
            TaskId::MedDg => BleuEntity,
            TaskId::ClinicalQa => McqAccuracy,
        }
    }

    pub fn name(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for TaskId {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| EvalError::Invalid(format!("unknown task `{s}`")))
    }
}

/// Published per-task benchmark scores of the domain-tuned 72B model, in
/// `BENCHMARK` order. Used as an aggregation fixture.
pub const PUBLISHED_SCORES: [f64; 18] = [
    77.17, 57.00, 43.88, 71.02, 74.03, 71.38, 87.16, 86.86, 66.02, 86.84, 18.23, 78.8, 88.72, 83.63, 71.83, 74.40,
    57.16, 21.68,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: TaskId,
    pub metric: MetricKind,
    pub score: f64,
}

impl TaskResult {
    pub fn new(task: TaskId, score: f64) -> Result<Self> {
        let r = TaskResult { task, metric: task.metric(), score };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.score) {
            return Err(EvalError::Invalid(format!("{}: score {} outside [0, 100]", self.task, self.score)));
        }
        if self.metric != self.task.metric() {
            return Err(EvalError::Invalid(format!(
                "{}: metric {:?} does not belong to this task",
                self.task, self.metric
            )));
        }
        Ok(())
    }
}

/// Unweighted mean of the task scores. Scores are summed in task order, so
/// the result does not depend on input order.
pub fn aggregate_macro(results: &[TaskResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(EvalError::Invalid("no task results to aggregate".into()));
    }
    let mut seen = HashSet::new();
    for r in results {
        r.validate()?;
        if !seen.insert(r.task) {
            return Err(EvalError::DuplicateTask(r.task.name()));
        }
    }
    let mut sorted = results.to_vec();
    sorted.sort_by_key(|r| r.task);
    Ok(sorted.iter().map(|r| r.score).sum::<f64>() / sorted.len() as f64)
}

/// Per-task results and the macro-average over the benchmark tasks among
/// them. ClinicalQA is reported but not averaged in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: Vec<TaskResult>,
    pub overall: Option<f64>,
}

impl EvalReport {
    pub fn new(tasks: Vec<TaskResult>) -> Result<Self> {
        aggregate_macro(&tasks)?;
        let bench: Vec<TaskResult> = tasks.iter().filter(|r| r.task != TaskId::ClinicalQa).copied().collect();
        let overall = if bench.is_empty() { None } else { Some(aggregate_macro(&bench)?) };
        Ok(EvalReport { tasks, overall })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Fixed-width text table, one task per row, total last.
    pub fn table(&self) -> String {
        let mut out = format!("{:<28} {:<18} {:>7}\n", "task", "metric", "score");
        for r in &self.tasks {
            let metric =
                serde_json::to_value(r.metric).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            out += &format!("{:<28} {:<18} {:>7.2}\n", r.task.name(), metric, r.score);
        }
        if let Some(o) = self.overall {
            out += &format!("{:<28} {:<18} {:>7.3}\n", "overall (macro)", "", o);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in TaskId::BENCHMARK.iter().chain([&TaskId::ClinicalQa]) {
            assert_eq!(t.name().parse::<TaskId>().unwrap(), *t);
        }
        assert_eq!(TaskId::ChipCdee.name(), "CHIP-CDEE");
        assert!("Text2DT".parse::<TaskId>().is_err());
    }

    #[test]
    fn single_and_equal() {
        assert_eq!(aggregate_macro(&[TaskResult::new(TaskId::KuakeIr, 18.23).unwrap()]).unwrap(), 18.23);
        let all: Vec<TaskResult> = TaskId::BENCHMARK.iter().map(|&t| TaskResult::new(t, 42.5).unwrap()).collect();
        assert_eq!(aggregate_macro(&all).unwrap(), 42.5);
    }

    #[test]
    fn duplicates_and_bad_results_rejected() {
        let r = TaskResult::new(TaskId::CMeEE, 50.0).unwrap();
        assert_eq!(aggregate_macro(&[r, r]), Err(EvalError::DuplicateTask("CMeEE".into())));
        assert!(TaskResult::new(TaskId::CMeEE, 100.5).is_err());
        let wrong = TaskResult { task: TaskId::CMeEE, metric: MetricKind::Accuracy, score: 1.0 };
        assert!(aggregate_macro(&[wrong]).is_err());
    }

    #[test]
    fn report_table_lists_every_task() {
        let rep = EvalReport::new(vec![
            TaskResult::new(TaskId::MedDg, 21.68).unwrap(),
            TaskResult::new(TaskId::ClinicalQa, 78.6).unwrap(),
        ])
        .unwrap();
        let t = rep.table();
        assert!(t.contains("MedDG") && t.contains("ClinicalQA"));
        assert_eq!(rep.overall, Some(21.68));
        assert!(t.contains("21.680"));
    }
}
