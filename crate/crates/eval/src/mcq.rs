//! Four-option multiple-choice accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{same_len, EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    C,
    D,
}

impl std::str::FromStr for Choice {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Choice::A),
            "B" | "b" => Ok(Choice::B),
            "C" | "c" => Ok(Choice::C),
            "D" | "d" => Ok(Choice::D),
            other => Err(EvalError::BadOption(other.to_string())),
        }
    }
}

impl Choice {
    /// The first capital option letter in a free-form model answer.
    pub fn find_in(text: &str) -> Option<Choice> {
        text.chars().filter(|c| c.is_ascii_uppercase()).find_map(|c| c.to_string().parse().ok())
    }
}

/// Published accuracy on the clinical multiple-choice set, kept as a report
/// reference row.
pub const CLINICAL_QA_REFERENCE: [(&str, f64); 3] =
    [("QWen2-72B", 65.3), ("QWen2-72B + medical tuning", 78.6), ("GPT-4o", 74.3)];

/// Exact-match fraction × 100. Every entry must name one of A–D.
pub fn mcq_accuracy<S: AsRef<str>>(answers: &[S], predictions: &[S]) -> Result<f64> {
    same_len(answers.len(), predictions.len())?;
    let parse = |v: &[S]| v.iter().map(|s| s.as_ref().parse()).collect::<Result<Vec<Choice>>>();
    let (a, p) = (parse(answers)?, parse(predictions)?);
    if a.is_empty() {
        return Ok(0.0);
    }
    let hits = a.iter().zip(&p).filter(|(x, y)| x == y).count();
    Ok(100.0 * hits as f64 / a.len() as f64)
}

/// Accuracy over already-parsed answers; a missing prediction is wrong.
pub fn mcq_accuracy_parsed(answers: &[Choice], predictions: &[Option<Choice>]) -> Result<f64> {
    same_len(answers.len(), predictions.len())?;
    if answers.is_empty() {
        return Ok(0.0);
    }
    let hits = answers.iter().zip(predictions).filter(|(a, p)| Some(**a) == **p).count();
    Ok(100.0 * hits as f64 / answers.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_prediction_counts_as_wrong() {
        let a = [Choice::A, Choice::B];
        assert_eq!(mcq_accuracy_parsed(&a, &[Some(Choice::A), None]).unwrap(), 50.0);
    }

    #[test]
    fn half_and_full() {
        assert_eq!(mcq_accuracy(&["A", "B", "C", "D"], &["A", "B", "D", "C"]).unwrap(), 50.0);
        assert_eq!(mcq_accuracy(&["A", "B"], &["A", "B"]).unwrap(), 100.0);
    }

    #[test]
    fn option_outside_set() {
        assert_eq!(mcq_accuracy(&["A"], &["E"]), Err(EvalError::BadOption("E".into())));
    }

    #[test]
    fn answer_extraction() {
        assert_eq!(Choice::find_in("答案：C。"), Some(Choice::C));
        assert_eq!(Choice::find_in("the answer is C"), Some(Choice::C));
        assert_eq!(Choice::find_in("不确定"), None);
    }
}
