//! Single-label classification metrics.

use crate::error::{same_len, EvalError, Result};
use crate::f1::Prf;

/// Exact-match fraction × 100. Empty input scores 0.
pub fn accuracy<S: AsRef<str>>(gold: &[S], pred: &[S]) -> Result<f64> {
    same_len(gold.len(), pred.len())?;
    if gold.is_empty() {
        return Ok(0.0);
    }
    let hits = gold.iter().zip(pred).filter(|(g, p)| g.as_ref() == p.as_ref()).count();
    Ok(100.0 * hits as f64 / gold.len() as f64)
}

/// Unweighted mean of per-label F1 over `labels`. A label never predicted
/// and never in gold contributes 0. Gold or predicted labels outside the set
/// are errors.
pub fn macro_f1<S: AsRef<str>>(gold: &[S], pred: &[S], labels: &[String]) -> Result<f64> {
    same_len(gold.len(), pred.len())?;
    for l in gold.iter().chain(pred) {
        if !labels.iter().any(|x| x == l.as_ref()) {
            return Err(EvalError::UnknownLabel(l.as_ref().to_string()));
        }
    }
    if labels.is_empty() {
        return Err(EvalError::Invalid("empty label set".into()));
    }
    let mut total = 0.0;
    for l in labels {
        let (mut tp, mut np, mut ng) = (0, 0, 0);
        for (g, p) in gold.iter().zip(pred) {
            let (g, p) = (g.as_ref() == l, p.as_ref() == l);
            tp += (g && p) as usize;
            np += p as usize;
            ng += g as usize;
        }
        total += if np == 0 && ng == 0 { 0.0 } else { Prf::from_counts(tp, np, ng).f1 };
    }
    Ok(total / labels.len() as f64)
}

/// Sorted distinct labels appearing in gold or predictions.
pub fn observed_labels<S: AsRef<str>>(gold: &[S], pred: &[S]) -> Vec<String> {
    let mut v: Vec<String> = gold.iter().chain(pred).map(|s| s.as_ref().to_string()).collect();
    v.sort();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_is_100() {
        let g = ["a", "b", "a"];
        assert_eq!(accuracy(&g, &g).unwrap(), 100.0);
        assert_eq!(macro_f1(&g, &g, &labels(&["a", "b"])).unwrap(), 100.0);
    }

    #[test]
    fn one_label_never_predicted() {
        let g = ["a", "a"];
        let p = ["a", "a"];
        assert_eq!(macro_f1(&g, &p, &labels(&["a", "b"])).unwrap(), 50.0);
    }

    #[test]
    fn three_of_four() {
        assert_eq!(accuracy(&["a", "b", "c", "d"], &["a", "b", "c", "x"]).unwrap(), 75.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(macro_f1(&["a"], &["z"], &labels(&["a"])), Err(EvalError::UnknownLabel(_))));
        assert!(accuracy(&["a"], &[]).is_err());
    }
}
