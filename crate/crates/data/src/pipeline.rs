//! The full data stage: corpus cleaning through dataset assembly.

use serde::{Deserialize, Serialize};

use clinlm_core::dpo::DpoTriple;

use crate::clean::{CleanConfig, Cleaned, Cleaner};
use crate::corpus::{check_ids, Category, RawDocument};
use crate::dedup::{dedup, DedupConfig, Match, Removal};
use crate::drug::{synthesize_all, DrugRecord};
use crate::error::Result;
use crate::feedback::{build_dpo_dataset, Feedback};
use crate::generate::{
    apply_review, synthesize_with_generator, Candidate, GeneratorClient, ReviewEntry, Task, Unlisted,
};
use crate::pii::{PiiConfig, Scrubber};
use crate::report::Report;
use crate::sft::{ingest_pairs, Origin, PairInput, Sourced};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub task: Task,
    /// Corpus categories whose documents are sent to the generator.
    pub categories: Vec<Category>,
    pub unlisted: Unlisted,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            task: Task::Guideline,
            categories: vec![Category::Guideline, Category::ExpertConsensus, Category::Protocol],
            unlisted: Unlisted::Hold,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub clean: CleanConfig,
    pub dedup: DedupConfig,
    pub pii: PiiConfig,
    pub generation: GenerationConfig,
}

#[derive(Default)]
pub struct DataInputs<'a> {
    pub corpus: Vec<RawDocument>,
    pub drugs: Vec<DrugRecord>,
    pub public: Vec<PairInput>,
    pub safety: Vec<PairInput>,
    pub feedback: Vec<Feedback>,
    pub generator: Option<&'a mut dyn GeneratorClient>,
    pub review: Vec<ReviewEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct DataOutputs {
    pub corpus: Vec<RawDocument>,
    pub removals: Vec<Removal>,
    pub candidates: Vec<Candidate>,
    pub sft: Vec<Sourced>,
    pub triples: Vec<DpoTriple>,
    pub report: Report,
}

impl DataOutputs {
    /// Every output file as `(name, contents)`, in a fixed order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let (sft, provenance) = crate::sft::render(&self.sft);
        vec![
            ("corpus.jsonl", crate::jsonl::to_string(&self.corpus)),
            ("dedup.jsonl", crate::jsonl::to_string(&self.removals)),
            ("candidates.jsonl", crate::jsonl::to_string(&self.candidates)),
            ("sft.jsonl", sft),
            ("sft.provenance.jsonl", provenance),
            ("dpo.jsonl", crate::jsonl::to_string(&self.triples)),
            ("report.jsonl", crate::jsonl::to_string(&self.report.lines())),
        ]
    }
}

/// Cleans, scrubs and deduplicates the corpus, then assembles the SFT set
/// (public, safety, drug templates, reviewed generations) and the preference
/// set. All emitted text passes through the PII scrubber.
pub fn run(inputs: DataInputs<'_>, cfg: &DataConfig) -> Result<DataOutputs> {
    check_ids(&inputs.corpus)?;
    let cleaner = Cleaner::new(&cfg.clean)?;
    let scrubber = Scrubber::new(&cfg.pii)?;
    cfg.dedup.validate()?;
    let mut report = Report::default();

    let mut docs = Vec::with_capacity(inputs.corpus.len());
    for doc in inputs.corpus {
        match cleaner.clean(doc) {
            Cleaned::Kept(mut d) => {
                d.text = scrubber.scrub(&d.text);
                docs.push(d);
            }
            Cleaned::Dropped { id, reason } => report.add("clean", &id, reason, 1),
        }
    }
    let deduped = dedup(docs, &cfg.dedup)?;
    for r in &deduped.removed {
        let reason = match r.matched {
            Match::Exact => "exact-duplicate",
            Match::Near { .. } => "near-duplicate",
        };
        report.add("dedup", &r.id, reason, 1);
    }

    let mut sft = ingest_pairs(inputs.public, Origin::Public, "public")?;
    sft.extend(ingest_pairs(inputs.safety, Origin::Safety, "safety")?);
    sft.extend(synthesize_all(&inputs.drugs)?);

    let mut candidates = Vec::new();
    if let Some(client) = inputs.generator {
        let sources: Vec<RawDocument> =
            deduped.kept.iter().filter(|d| cfg.generation.categories.contains(&d.category)).cloned().collect();
        let (c, skips) = synthesize_with_generator(&sources, cfg.generation.task, client);
        report.merge(&skips);
        let reviewed = apply_review(&c, &inputs.review, cfg.generation.unlisted)?;
        report.merge(&reviewed.report);
        sft.extend(reviewed.accepted);
        candidates = c;
    }
    for s in &mut sft {
        s.record.prompt = scrubber.scrub(&s.record.prompt);
        s.record.response = scrubber.scrub(&s.record.response);
    }

    let (mut triples, dpo_report) = build_dpo_dataset(&inputs.feedback);
    report.merge(&dpo_report);
    for t in &mut triples {
        t.prompt = scrubber.scrub(&t.prompt);
        t.chosen = scrubber.scrub(&t.chosen);
        t.rejected = scrubber.scrub(&t.rejected);
    }

    Ok(DataOutputs { corpus: deduped.kept, removals: deduped.removed, candidates, sft, triples, report })
}
