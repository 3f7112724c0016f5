//! Strict micro-F1 over exact tuple matches, pooled across documents.

use std::collections::HashSet;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{same_len, EvalError, Result};

/// The items of one document. Duplicates within a document count once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Doc<T> {
    pub id: String,
    pub items: Vec<T>,
}

impl<T> Doc<T> {
    pub fn new(id: impl Into<String>, items: Vec<T>) -> Self {
        Doc { id: id.into(), items }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// From pooled counts, on the 0–100 scale. When both sides are empty the
    /// prediction agrees with the gold exactly and every figure is 100.
    pub fn from_counts(tp: usize, n_pred: usize, n_gold: usize) -> Prf {
        if n_pred == 0 && n_gold == 0 {
            return Prf { precision: 100.0, recall: 100.0, f1: 100.0 };
        }
        let p = if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 };
        let r = if n_gold == 0 { 0.0 } else { tp as f64 / n_gold as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Prf { precision: 100.0 * p, recall: 100.0 * r, f1: 100.0 * f }
    }
}

/// Pooled true-positive, predicted and gold counts over aligned documents.
pub fn counts<T: Eq + Hash>(gold: &[Doc<T>], pred: &[Doc<T>]) -> Result<(usize, usize, usize)> {
    same_len(gold.len(), pred.len())?;
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.id != p.id {
            return Err(EvalError::Misaligned { index: i, gold: g.id.clone(), pred: p.id.clone() });
        }
        let gs: HashSet<&T> = g.items.iter().collect();
        let ps: HashSet<&T> = p.items.iter().collect();
        tp += ps.intersection(&gs).count();
        np += ps.len();
        ng += gs.len();
    }
    Ok((tp, np, ng))
}

pub fn strict_prf<T: Eq + Hash>(gold: &[Doc<T>], pred: &[Doc<T>]) -> Result<Prf> {
    let (tp, np, ng) = counts(gold, pred)?;
    Ok(Prf::from_counts(tp, np, ng))
}

/// A labeled character span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanEntity {
    pub start: usize,
    pub end: usize,
    pub category: String,
}

impl SpanEntity {
    pub fn new(start: usize, end: usize, category: &str) -> Result<Self> {
        let e = SpanEntity { start, end, category: category.into() };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start >= self.end || self.category.is_empty() {
            return Err(EvalError::Invalid(format!("bad span {:?}", self)));
        }
        Ok(())
    }
}

/// Subject–predicate–object relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpoTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl SpoTriple {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Result<Self> {
        if subject.is_empty() || predicate.is_empty() || object.is_empty() {
            return Err(EvalError::Invalid("triple with an empty field".into()));
        }
        Ok(SpoTriple { subject: subject.into(), predicate: predicate.into(), object: object.into() })
    }
}

/// A clinical event described by four attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventQuad {
    pub subject: String,
    pub site: String,
    pub descriptor: String,
    pub state: String,
}

/// An original term and the standard term it normalizes to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermPair {
    pub original: String,
    pub standard: String,
}

/// Exact `(start, end, category)` matches.
pub fn micro_f1_strict(gold: &[Doc<SpanEntity>], pred: &[Doc<SpanEntity>]) -> Result<f64> {
    Ok(strict_prf(gold, pred)?.f1)
}

pub fn triple_f1(gold: &[Doc<SpoTriple>], pred: &[Doc<SpoTriple>]) -> Result<f64> {
    Ok(strict_prf(gold, pred)?.f1)
}

pub fn quadruple_f1(gold: &[Doc<EventQuad>], pred: &[Doc<EventQuad>]) -> Result<f64> {
    Ok(strict_prf(gold, pred)?.f1)
}

pub fn pair_f1(gold: &[Doc<TermPair>], pred: &[Doc<TermPair>]) -> Result<f64> {
    Ok(strict_prf(gold, pred)?.f1)
}

/// A finding or symptom term with its status label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermStatus {
    pub term: String,
    pub status: String,
}

/// Tuples carrying a class label for label-wise averaging.
pub trait Labeled {
    fn label(&self) -> &str;
}

impl Labeled for SpoTriple {
    fn label(&self) -> &str {
        &self.predicate
    }
}

impl Labeled for TermStatus {
    fn label(&self) -> &str {
        &self.status
    }
}

/// Mean over labels of the strict tuple F1 restricted to tuples with that
/// label. `labels` defaults to every label seen in gold or predictions; an
/// explicit set rejects tuples labeled outside it.
pub fn label_macro_f1<T: Labeled + Eq + Hash + Clone>(
    gold: &[Doc<T>],
    pred: &[Doc<T>],
    labels: Option<&[String]>,
) -> Result<f64> {
    counts(gold, pred)?;
    let all = gold.iter().chain(pred).flat_map(|d| &d.items);
    let labels: Vec<String> = match labels {
        Some(set) => {
            if let Some(t) = all.clone().find(|t| !set.iter().any(|l| l == t.label())) {
                return Err(EvalError::UnknownLabel(t.label().to_string()));
            }
            set.to_vec()
        }
        None => {
            let mut v: Vec<String> = all.map(|t| t.label().to_string()).collect();
            v.sort();
            v.dedup();
            v
        }
    };
    if labels.is_empty() {
        return Ok(Prf::from_counts(0, 0, 0).f1);
    }
    let only = |docs: &[Doc<T>], label: &str| -> Vec<Doc<T>> {
        docs.iter()
            .map(|d| Doc::new(d.id.clone(), d.items.iter().filter(|t| t.label() == label).cloned().collect()))
            .collect()
    };
    let mut total = 0.0;
    for l in &labels {
        total += strict_prf(&only(gold, l), &only(pred, l))?.f1;
    }
    Ok(total / labels.len() as f64)
}

/// Relation-type macro-F1 over strict triples.
pub fn relation_macro_f1(
    gold: &[Doc<SpoTriple>],
    pred: &[Doc<SpoTriple>],
    relations: Option<&[String]>,
) -> Result<f64> {
    label_macro_f1(gold, pred, relations)
}

/// Regroups item-level documents into coarser units: items of every
/// document sharing a group key are pooled into one document, in first-seen
/// order.
pub fn regroup<T: Clone>(docs: &[Doc<T>], group_of: &[String]) -> Result<Vec<Doc<T>>> {
    same_len(docs.len(), group_of.len())?;
    let mut order: Vec<&str> = Vec::new();
    let mut pooled: std::collections::HashMap<&str, Vec<T>> = Default::default();
    for (d, g) in docs.iter().zip(group_of) {
        pooled
            .entry(g.as_str())
            .or_insert_with(|| {
                order.push(g.as_str());
                Vec::new()
            })
            .extend(d.items.iter().cloned());
    }
    Ok(order.into_iter().map(|g| Doc::new(g, pooled.remove(g).unwrap_or_default())).collect())
}
