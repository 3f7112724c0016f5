//! Scoring from line-delimited JSON gold and prediction files.
//!
//! Every line carries an `id`; gold and prediction lines must appear in the
//! same order. The remaining keys depend on the task:
//!
//! | task | keys |
//! |------|------|
//! | CMeEE, IMCS-V2-NER | `entities: [{start, end, category}]` |
//! | CMeIE, CMedCausal | `triples: [{subject, predicate, object}]` |
//! | CHIP-CDEE | `events: [{subject, site, descriptor, state}]` |
//! | CHIP-CDN | `pairs: [{original, standard}]` |
//! | CHIP-MDCFNPC | `findings: [{term, status}]` |
//! | IMCS-V2-SR-* | `dialog`, `symptoms: [{term, status}]` (one line per utterance) |
//! | classification tasks | `label` |
//! | KUAKE-IR | gold `relevant`, prediction `ranked: [..]` |
//! | IMCS-V2-MRG, MedDG | `text` |
//! | ClinicalQA | `answer` (A–D) |

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bleu::bleu_entity;
use crate::classify::{accuracy, macro_f1, observed_labels};
use crate::error::{EvalError, Result};
use crate::f1::{
    label_macro_f1, micro_f1_strict, pair_f1, quadruple_f1, regroup, triple_f1, Doc, EventQuad, SpanEntity, SpoTriple,
    TermPair, TermStatus,
};
use crate::mcq::mcq_accuracy;
use crate::rank::mrr_at_10;
use crate::rouge::rouge_score;
use crate::tasks::{TaskId, TaskResult};
use crate::text::{normalize, Tokenization};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreOptions {
    pub tokenization: Tokenization,
    /// Fold width and case of text fields before matching. Off by default.
    pub normalize: bool,
    /// Declared label set for macro-F1 tasks; defaults to the labels observed
    /// in gold and predictions.
    pub labels: Option<Vec<String>>,
    /// Entity lexicon for MedDG.
    pub lexicon: Vec<String>,
}

fn parse<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Invalid(format!("{what} line {}: {e}", i + 1))))
        .collect()
}

#[derive(Deserialize)]
struct Row<P> {
    id: String,
    #[serde(flatten)]
    payload: P,
}

#[derive(Deserialize)]
struct Entities {
    entities: Vec<SpanEntity>,
}
#[derive(Deserialize)]
struct Triples {
    triples: Vec<SpoTriple>,
}
#[derive(Deserialize)]
struct Events {
    events: Vec<EventQuad>,
}
#[derive(Deserialize)]
struct Pairs {
    pairs: Vec<TermPair>,
}
#[derive(Deserialize)]
struct Findings {
    findings: Vec<TermStatus>,
}
#[derive(Deserialize)]
struct Symptoms {
    dialog: String,
    symptoms: Vec<TermStatus>,
}
#[derive(Deserialize)]
struct Label {
    label: String,
}
#[derive(Deserialize)]
struct Relevant {
    relevant: String,
}
#[derive(Deserialize)]
struct Ranked {
    ranked: Vec<String>,
}
#[derive(Deserialize)]
struct Text {
    text: String,
}
#[derive(Deserialize)]
struct Answer {
    answer: String,
}

type RowPair<P> = (Vec<Row<P>>, Vec<Row<P>>);

fn rows<P: DeserializeOwned>(gold: &str, pred: &str) -> Result<RowPair<P>> {
    let (g, p): RowPair<P> = (parse(gold, "gold")?, parse(pred, "prediction")?);
    check_ids(g.iter().map(|r| &r.id), p.iter().map(|r| &r.id))?;
    Ok((g, p))
}

fn check_ids<'a>(
    g: impl ExactSizeIterator<Item = &'a String>,
    p: impl ExactSizeIterator<Item = &'a String>,
) -> Result<()> {
    crate::error::same_len(g.len(), p.len())?;
    for (index, (a, b)) in g.zip(p).enumerate() {
        if a != b {
            return Err(EvalError::Misaligned { index, gold: a.clone(), pred: b.clone() });
        }
    }
    Ok(())
}

fn docs<P, T>(rows: Vec<Row<P>>, f: impl Fn(P) -> Vec<T>) -> Vec<Doc<T>> {
    rows.into_iter().map(|r| Doc::new(r.id, f(r.payload))).collect()
}

fn norm_status(norm: bool) -> impl Fn(Findings) -> Vec<TermStatus> {
    move |f: Findings| f.findings.into_iter().map(|t| ns(t, norm)).collect()
}

fn ns(t: TermStatus, norm: bool) -> TermStatus {
    if norm {
        TermStatus { term: normalize(&t.term), status: normalize(&t.status) }
    } else {
        t
    }
}

fn n(s: String, norm: bool) -> String {
    if norm {
        normalize(&s)
    } else {
        s
    }
}

/// Scores one task from the contents of its gold and prediction files.
pub fn score_task(task: TaskId, gold: &str, pred: &str, opts: &ScoreOptions) -> Result<TaskResult> {
    let z = opts.normalize;
    let score = match task {
        TaskId::CMeEE | TaskId::ImcsNer => {
            let (g, p) = rows::<Entities>(gold, pred)?;
            let f =
                |e: Entities| e.entities.into_iter().map(|s| SpanEntity { category: n(s.category, z), ..s }).collect();
            let (g, p) = (docs(g, f), docs(p, f));
            for e in g.iter().chain(&p).flat_map(|d| &d.items) {
                e.validate()?;
            }
            micro_f1_strict(&g, &p)?
        }
        TaskId::CMeIE | TaskId::CMedCausal => {
            let (g, p) = rows::<Triples>(gold, pred)?;
            let f = |t: Triples| {
                t.triples
                    .into_iter()
                    .map(|t| SpoTriple {
                        subject: n(t.subject, z),
                        predicate: n(t.predicate, z),
                        object: n(t.object, z),
                    })
                    .collect()
            };
            let (g, p) = (docs(g, f), docs(p, f));
            if task == TaskId::CMeIE {
                triple_f1(&g, &p)?
            } else {
                label_macro_f1(&g, &p, opts.labels.as_deref())?
            }
        }
        TaskId::ChipCdee => {
            let (g, p) = rows::<Events>(gold, pred)?;
            let f = |e: Events| {
                e.events
                    .into_iter()
                    .map(|q| EventQuad {
                        subject: n(q.subject, z),
                        site: n(q.site, z),
                        descriptor: n(q.descriptor, z),
                        state: n(q.state, z),
                    })
                    .collect()
            };
            quadruple_f1(&docs(g, f), &docs(p, f))?
        }
        TaskId::ChipCdn => {
            let (g, p) = rows::<Pairs>(gold, pred)?;
            let f = |e: Pairs| {
                e.pairs
                    .into_iter()
                    .map(|q| TermPair { original: n(q.original, z), standard: n(q.standard, z) })
                    .collect()
            };
            pair_f1(&docs(g, f), &docs(p, f))?
        }
        TaskId::ChipMdcfnpc => {
            let (g, p) = rows::<Findings>(gold, pred)?;
            label_macro_f1(&docs(g, norm_status(z)), &docs(p, norm_status(z)), opts.labels.as_deref())?
        }
        TaskId::ImcsSrUtterance | TaskId::ImcsSrDialog => {
            let (g, p) = rows::<Symptoms>(gold, pred)?;
            let dialogs: Vec<String> = g.iter().map(|r| r.payload.dialog.clone()).collect();
            let f = |s: Symptoms| s.symptoms.into_iter().map(|t| ns(t, z)).collect();
            let (g, p) = (docs(g, f), docs(p, f));
            if task == TaskId::ImcsSrUtterance {
                crate::f1::strict_prf(&g, &p)?.f1
            } else {
                crate::f1::strict_prf(&regroup(&g, &dialogs)?, &regroup(&p, &dialogs)?)?.f1
            }
        }
        TaskId::ChipCtc
        | TaskId::ChipSts
        | TaskId::KuakeQic
        | TaskId::KuakeQtr
        | TaskId::KuakeQqr
        | TaskId::ImcsDac => {
            let (g, p) = rows::<Label>(gold, pred)?;
            let g: Vec<String> = g.into_iter().map(|r| n(r.payload.label, z)).collect();
            let p: Vec<String> = p.into_iter().map(|r| n(r.payload.label, z)).collect();
            if task.metric() == crate::tasks::MetricKind::MacroF1 {
                let labels = opts.labels.clone().unwrap_or_else(|| observed_labels(&g, &p));
                macro_f1(&g, &p, &labels)?
            } else {
                accuracy(&g, &p)?
            }
        }
        TaskId::KuakeIr => {
            let g: Vec<Row<Relevant>> = parse(gold, "gold")?;
            let p: Vec<Row<Ranked>> = parse(pred, "prediction")?;
            check_ids(g.iter().map(|r| &r.id), p.iter().map(|r| &r.id))?;
            let rel: Vec<String> = g.into_iter().map(|r| r.payload.relevant).collect();
            let ranked: Vec<Vec<String>> = p.into_iter().map(|r| r.payload.ranked).collect();
            mrr_at_10(&ranked, &rel)?
        }
        TaskId::ImcsMrg | TaskId::MedDg => {
            let (g, p) = rows::<Text>(gold, pred)?;
            let g: Vec<String> = g.into_iter().map(|r| n(r.payload.text, z)).collect();
            let p: Vec<String> = p.into_iter().map(|r| n(r.payload.text, z)).collect();
            if task == TaskId::ImcsMrg {
                rouge_score(&p, &g, opts.tokenization)?
            } else {
                let be = bleu_entity(&p, &g, &opts.lexicon, opts.tokenization)?;
                (be.bleu + be.entity_f1) / 2.0
            }
        }
        TaskId::ClinicalQa => {
            let (g, p) = rows::<Answer>(gold, pred)?;
            let g: Vec<String> = g.into_iter().map(|r| r.payload.answer).collect();
            let p: Vec<String> = p.into_iter().map(|r| r.payload.answer).collect();
            mcq_accuracy(&g, &p)?
        }
    };
    TaskResult::new(task, score)
}
