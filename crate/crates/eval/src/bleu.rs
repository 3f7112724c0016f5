//! Sentence BLEU-4 with add-one smoothing, and lexicon entity F1.

use std::collections::{HashMap, HashSet};

use crate::error::{same_len, EvalError, Result};
use crate::f1::Prf;
use crate::text::{tokenize, Tokenization};

pub const MAX_N: usize = 4;

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// BLEU-4 of one candidate against one reference, on the 0–100 scale. Each
/// n-gram precision is `(clipped matches + 1) / (candidate n-grams + 1)`;
/// the brevity penalty is `exp(1 − r/c)` when the candidate is shorter.
pub fn sentence_bleu<T: AsRef<str>>(cand: &[T], reference: &[T]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 1..=MAX_N {
        let c = ngram_counts(cand, n);
        let r = ngram_counts(reference, n);
        let matched: usize = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
        let total: usize = c.values().sum();
        log_p += ((matched + 1) as f64 / (total + 1) as f64).ln();
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c < r { 1.0 - r / c } else { 0.0 };
    100.0 * (bp + log_p / MAX_N as f64).exp()
}

/// Lexicon entries occurring as substrings of `text`.
pub fn entities_in<'a>(text: &str, lexicon: &'a [String]) -> HashSet<&'a str> {
    lexicon.iter().filter(|e| text.contains(e.as_str())).map(String::as_str).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuEntity {
    pub bleu: f64,
    pub entity_f1: f64,
}

/// Mean sentence BLEU-4, and micro-F1 of lexicon entities found in each
/// candidate against those found in its reference.
pub fn bleu_entity<S: AsRef<str>>(
    cands: &[S],
    refs: &[S],
    lexicon: &[String],
    mode: Tokenization,
) -> Result<BleuEntity> {
    same_len(refs.len(), cands.len())?;
    if lexicon.iter().all(|e| e.is_empty()) {
        return Err(EvalError::Invalid("entity lexicon is empty".into()));
    }
    let lexicon: Vec<String> = lexicon.iter().filter(|e| !e.is_empty()).cloned().collect();
    let (mut bleu, mut tp, mut np, mut ng) = (0.0, 0, 0, 0);
    for (c, r) in cands.iter().zip(refs) {
        bleu += sentence_bleu(&tokenize(c.as_ref(), mode), &tokenize(r.as_ref(), mode));
        let (ce, re) = (entities_in(c.as_ref(), &lexicon), entities_in(r.as_ref(), &lexicon));
        tp += ce.intersection(&re).count();
        np += ce.len();
        ng += re.len();
    }
    let n = refs.len().max(1) as f64;
    Ok(BleuEntity { bleu: bleu / n, entity_f1: Prf::from_counts(tp, np, ng).f1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s, Tokenization::Words)
    }

    #[test]
    fn identical_is_100() {
        let t = toks("take one tablet twice a day");
        assert!((sentence_bleu(&t, &t) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn no_shared_unigrams_hits_the_floor() {
        let b = sentence_bleu(&toks("a b c d"), &toks("w x y z"));
        let floor = 100.0 * (1.0f64 / 5.0 * 1.0 / 4.0 * 1.0 / 3.0 * 1.0 / 2.0).powf(0.25);
        assert!((b - floor).abs() < 1e-9);
        let long_c: Vec<String> = (0..40).map(|i| format!("c{i}")).collect();
        let long_r: Vec<String> = (0..40).map(|i| format!("r{i}")).collect();
        assert!(sentence_bleu(&long_c, &long_r) < 3.0);
    }

    #[test]
    fn brevity_penalty_applies() {
        let r = toks("a b c d e f g h");
        let short = sentence_bleu(&toks("a b c d"), &r);
        let full = sentence_bleu(&r, &r);
        assert!(short < full);
    }

    #[test]
    fn entities() {
        let lex = vec!["头痛".to_string(), "布洛芬".to_string()];
        let out = bleu_entity(&["头痛可服布洛芬"], &["头痛可服布洛芬"], &lex, Tokenization::Auto).unwrap();
        assert!((out.bleu - 100.0).abs() < 1e-9);
        assert_eq!(out.entity_f1, 100.0);
        let out = bleu_entity(&["多喝水"], &["头痛可服布洛芬"], &lex, Tokenization::Auto).unwrap();
        assert_eq!(out.entity_f1, 0.0);
        assert!(bleu_entity(&["a"], &["a"], &[], Tokenization::Auto).is_err());
    }
}
