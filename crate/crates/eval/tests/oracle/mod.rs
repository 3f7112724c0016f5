//! Brute-force reference implementations and random instance generators,
//! written without reference to the library's algorithms.

#![allow(dead_code)]

use clinlm_eval::f1::{Doc, SpanEntity, SpoTriple};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn f1_from(tp: f64, np: f64, ng: f64) -> f64 {
    if np == 0.0 && ng == 0.0 {
        return 100.0;
    }
    let p = if np > 0.0 { tp / np } else { 0.0 };
    let r = if ng > 0.0 { tp / ng } else { 0.0 };
    if p + r == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * p * r / (p + r)
    }
}

fn distinct<T: PartialEq + Clone>(v: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for x in v {
        if !out.contains(x) {
            out.push(x.clone());
        }
    }
    out
}

/// Pooled strict F1 by linear scans over de-duplicated item lists.
pub fn strict_f1<T: PartialEq + Clone>(gold: &[Doc<T>], pred: &[Doc<T>]) -> f64 {
    let (mut tp, mut np, mut ng) = (0.0, 0.0, 0.0);
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (distinct(&g.items), distinct(&p.items));
        for x in &p {
            if g.iter().any(|y| y == x) {
                tp += 1.0;
            }
        }
        np += p.len() as f64;
        ng += g.len() as f64;
    }
    f1_from(tp, np, ng)
}

/// Per-label strict F1 averaged over the given labels.
pub fn label_macro<T: PartialEq + Clone>(
    gold: &[Doc<T>],
    pred: &[Doc<T>],
    label: impl Fn(&T) -> String,
    labels: &[String],
) -> f64 {
    let mut total = 0.0;
    for l in labels {
        let keep = |d: &Doc<T>| Doc::new(d.id.clone(), d.items.iter().filter(|t| &label(t) == l).cloned().collect());
        let g: Vec<Doc<T>> = gold.iter().map(keep).collect();
        let p: Vec<Doc<T>> = pred.iter().map(keep).collect();
        total += strict_f1(&g, &p);
    }
    if labels.is_empty() {
        100.0
    } else {
        total / labels.len() as f64
    }
}

/// Macro-F1 from a full confusion matrix.
pub fn macro_f1(gold: &[String], pred: &[String], labels: &[String]) -> f64 {
    let k = labels.len();
    let idx = |s: &String| labels.iter().position(|l| l == s).unwrap();
    let mut m = vec![vec![0.0f64; k]; k];
    for (g, p) in gold.iter().zip(pred) {
        m[idx(g)][idx(p)] += 1.0;
    }
    let mut total = 0.0;
    for (i, row) in m.iter().enumerate() {
        let tp = row[i];
        let np: f64 = m.iter().map(|r| r[i]).sum();
        let ng: f64 = row.iter().sum();
        total += if np == 0.0 && ng == 0.0 { 0.0 } else { f1_from(tp, np, ng) };
    }
    total / k as f64
}

pub fn accuracy(gold: &[String], pred: &[String]) -> f64 {
    let mut hits = 0.0;
    for i in 0..gold.len() {
        if gold[i] == pred[i] {
            hits += 1.0;
        }
    }
    if gold.is_empty() {
        0.0
    } else {
        100.0 * hits / gold.len() as f64
    }
}

pub fn mrr10(ranked: &[Vec<String>], relevant: &[String]) -> f64 {
    let mut total = 0.0;
    for (list, rel) in ranked.iter().zip(relevant) {
        let mut rank = 0;
        while rank < list.len() && rank < 10 {
            if &list[rank] == rel {
                total += 1.0 / (rank as f64 + 1.0);
                break;
            }
            rank += 1;
        }
    }
    if ranked.is_empty() {
        0.0
    } else {
        100.0 * total / ranked.len() as f64
    }
}

fn is_subsequence(small: &[&String], big: &[String]) -> bool {
    let mut it = big.iter();
    small.iter().all(|s| it.any(|b| b == *s))
}

/// LCS by enumerating every subsequence of `a` (|a| ≤ 12).
pub fn lcs_brute(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 12);
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        if sub.len() > best && is_subsequence(&sub, b) {
            best = sub.len();
        }
    }
    best
}

pub fn rouge_l(c: &[String], r: &[String]) -> f64 {
    let l = lcs_brute(c, r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, rc) = (l / c.len() as f64, l / r.len() as f64);
    100.0 * 2.0 * p * rc / (p + rc)
}

/// BLEU-4 with add-one precisions, counting n-grams with association lists.
pub fn bleu(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let grams = |t: &[String], n: usize| -> Vec<(Vec<String>, usize)> {
        let mut out: Vec<(Vec<String>, usize)> = Vec::new();
        if t.len() >= n {
            for i in 0..=t.len() - n {
                let g = t[i..i + n].to_vec();
                match out.iter_mut().find(|(x, _)| *x == g) {
                    Some(e) => e.1 += 1,
                    None => out.push((g, 1)),
                }
            }
        }
        out
    };
    let mut prod = 1.0f64;
    for n in 1..=4 {
        let cg = grams(c, n);
        let rg = grams(r, n);
        let mut m = 0usize;
        let mut tot = 0usize;
        for (g, k) in &cg {
            let rk = rg.iter().find(|(x, _)| x == g).map(|e| e.1).unwrap_or(0);
            m += (*k).min(rk);
            tot += k;
        }
        prod *= (m as f64 + 1.0) / (tot as f64 + 1.0);
    }
    let bp = if c.len() < r.len() { (1.0 - r.len() as f64 / c.len() as f64).exp() } else { 1.0 };
    100.0 * bp * prod.powf(0.25)
}

pub fn entity_f1(cands: &[String], refs: &[String], lexicon: &[String]) -> f64 {
    let (mut tp, mut np, mut ng) = (0.0, 0.0, 0.0);
    let lex = distinct(lexicon);
    for (c, r) in cands.iter().zip(refs) {
        for e in &lex {
            let (inc, inr) = (c.contains(e.as_str()), r.contains(e.as_str()));
            tp += (inc && inr) as u8 as f64;
            np += inc as u8 as f64;
            ng += inr as u8 as f64;
        }
    }
    f1_from(tp, np, ng)
}

// Generators.

pub fn pick<'a, R: Rng>(rng: &mut R, v: &'a [&'a str]) -> &'a str {
    v.choose(rng).unwrap()
}

pub fn random_spans<R: Rng>(rng: &mut R) -> (Vec<Doc<SpanEntity>>, Vec<Doc<SpanEntity>>) {
    let docs = rng.gen_range(1..5);
    let cats = ["Disease", "Drug", "Symptom"];
    let mut g = Vec::new();
    let mut p = Vec::new();
    for d in 0..docs {
        let mk = |rng: &mut R| {
            (0..rng.gen_range(0..5))
                .map(|_| {
                    let s = rng.gen_range(0..6);
                    SpanEntity { start: s, end: s + rng.gen_range(1..3), category: pick(rng, &cats).into() }
                })
                .collect::<Vec<_>>()
        };
        let gi = mk(rng);
        let mut pi = mk(rng);
        // Copy some gold items so matches are common.
        for e in &gi {
            if rng.gen_bool(0.5) {
                pi.push(e.clone());
            }
        }
        g.push(Doc::new(format!("d{d}"), gi));
        p.push(Doc::new(format!("d{d}"), pi));
    }
    (g, p)
}

pub fn random_triples<R: Rng>(rng: &mut R) -> (Vec<Doc<SpoTriple>>, Vec<Doc<SpoTriple>>) {
    let ents = ["发热", "感冒", "咳嗽", "肺炎"];
    let rels = ["cause", "condition", "hierarchy"];
    let docs = rng.gen_range(1..5);
    let mut g = Vec::new();
    let mut p = Vec::new();
    for d in 0..docs {
        let mk = |rng: &mut R| {
            (0..rng.gen_range(0..5))
                .map(|_| SpoTriple {
                    subject: pick(rng, &ents).into(),
                    predicate: pick(rng, &rels).into(),
                    object: pick(rng, &ents).into(),
                })
                .collect::<Vec<_>>()
        };
        g.push(Doc::new(format!("d{d}"), mk(rng)));
        p.push(Doc::new(format!("d{d}"), mk(rng)));
    }
    (g, p)
}

pub fn random_labels<R: Rng>(rng: &mut R, labels: &[String], n: usize) -> Vec<String> {
    (0..n).map(|_| labels.choose(rng).unwrap().clone()).collect()
}

pub fn random_tokens<R: Rng>(rng: &mut R, max: usize) -> Vec<String> {
    let vocab = ["a", "b", "c", "d", "e"];
    (0..rng.gen_range(1..=max)).map(|_| pick(rng, &vocab).to_string()).collect()
}
