//! Retrieval ranking metrics.

use std::collections::HashSet;

use crate::error::{same_len, EvalError, Result};

pub const MRR_CUTOFF: usize = 10;

/// Mean over queries of `1/rank` of the relevant document when it is within
/// the top ten, else 0; × 100. Empty input scores 0.
pub fn mrr_at_10<S: AsRef<str>>(ranked: &[Vec<S>], relevant: &[S]) -> Result<f64> {
    same_len(relevant.len(), ranked.len())?;
    if ranked.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, (list, rel)) in ranked.iter().zip(relevant).enumerate() {
        let mut seen = HashSet::new();
        for d in list {
            if !seen.insert(d.as_ref()) {
                return Err(EvalError::DuplicateRank { index: i, doc: d.as_ref().to_string() });
            }
        }
        if let Some(pos) = list.iter().take(MRR_CUTOFF).position(|d| d.as_ref() == rel.as_ref()) {
            total += 1.0 / (pos + 1) as f64;
        }
    }
    Ok(100.0 * total / ranked.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ranks_three_one_absent() {
        let ranked = vec![list(&["x", "y", "r1"]), list(&["r2"]), list(&["x"])];
        let rel = list(&["r1", "r2", "r3"]);
        let want = 100.0 * (1.0 / 3.0 + 1.0) / 3.0;
        assert!((mrr_at_10(&ranked, &rel).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn rank_eleven_scores_zero() {
        let mut l: Vec<String> = (0..10).map(|i| format!("n{i}")).collect();
        l.push("r".into());
        assert_eq!(mrr_at_10(&[l], &["r".to_string()]).unwrap(), 0.0);
    }

    #[test]
    fn duplicates_rejected() {
        assert!(mrr_at_10(&[list(&["a", "a"])], &list(&["a"])).is_err());
    }
}
