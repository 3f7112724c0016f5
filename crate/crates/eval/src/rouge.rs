//! ROUGE-L: longest-common-subsequence overlap.

use crate::error::{same_len, EvalError, Result};
use crate::text::{tokenize, Tokenization};

/// LCS length by dynamic programming over one rolling row.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1 (β = 1) of token sequences on the 0–100 scale.
pub fn rouge_l_tokens<T: PartialEq>(cand: &[T], reference: &[T]) -> f64 {
    let l = lcs_len(cand, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / cand.len() as f64;
    let r = l as f64 / reference.len() as f64;
    100.0 * 2.0 * p * r / (p + r)
}

pub fn rouge_l(cand: &str, reference: &str, mode: Tokenization) -> f64 {
    rouge_l_tokens(&tokenize(cand, mode), &tokenize(reference, mode))
}

/// Mean ROUGE-L F over aligned pairs. A reference with no tokens is an error.
pub fn rouge_score<S: AsRef<str>>(cands: &[S], refs: &[S], mode: Tokenization) -> Result<f64> {
    same_len(refs.len(), cands.len())?;
    if refs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, (c, r)) in cands.iter().zip(refs).enumerate() {
        let rt = tokenize(r.as_ref(), mode);
        if rt.is_empty() {
            return Err(EvalError::EmptyReference(i));
        }
        total += rouge_l_tokens(&tokenize(c.as_ref(), mode), &rt);
    }
    Ok(total / refs.len() as f64)
}
