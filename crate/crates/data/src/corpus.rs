//! Raw documents and the manifest that locates them on disk.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, DataError, Result};

/// Source categories of the medical corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Textbook,
    ExamBank,
    ExpertConsensus,
    CaseReport,
    Guideline,
    Protocol,
    Encyclopedia,
    Lecture,
    Monograph,
    AcademicPaper,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::Textbook,
        Category::ExamBank,
        Category::ExpertConsensus,
        Category::CaseReport,
        Category::Guideline,
        Category::Protocol,
        Category::Encyclopedia,
        Category::Lecture,
        Category::Monograph,
        Category::AcademicPaper,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDocument {
    pub id: String,
    pub category: Category,
    pub text: String,
}

/// One manifest line: `path` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub category: Category,
    pub path: String,
}

/// Rejects empty or repeated ids.
pub fn check_ids(docs: &[RawDocument]) -> Result<()> {
    let mut seen = HashSet::new();
    for d in docs {
        if d.id.is_empty() {
            return Err(DataError::Corpus("document with empty id".into()));
        }
        if !seen.insert(d.id.as_str()) {
            return Err(DataError::Corpus(format!("duplicate document id `{}`", d.id)));
        }
    }
    Ok(())
}

/// Reads every document listed in a manifest, in manifest order.
pub fn load(manifest: &Path) -> Result<Vec<RawDocument>> {
    let entries: Vec<ManifestEntry> = crate::jsonl::read(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let docs = entries
        .into_iter()
        .map(|e| {
            let path = base.join(&e.path);
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            Ok(RawDocument { id: e.id, category: e.category, text })
        })
        .collect::<Result<Vec<_>>>()?;
    check_ids(&docs)?;
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_use_kebab_names() {
        let names: Vec<String> = Category::ALL.iter().map(|c| serde_json::to_string(c).unwrap()).collect();
        assert!(names.contains(&"\"exam-bank\"".to_string()));
        assert!(names.contains(&"\"academic-paper\"".to_string()));
        assert!(serde_json::from_str::<Category>("\"blog\"").is_err());
    }

    #[test]
    fn manifest_loads_relative_paths_and_rejects_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "alpha").unwrap();
        std::fs::write(dir.path().join("b.txt"), "beta").unwrap();
        let m = dir.path().join("manifest.jsonl");
        std::fs::write(
            &m,
            "{\"id\":\"a\",\"category\":\"textbook\",\"path\":\"a.txt\"}\n{\"id\":\"b\",\"category\":\"guideline\",\"path\":\"b.txt\"}\n",
        )
        .unwrap();
        let docs = load(&m).unwrap();
        assert_eq!(docs[1].text, "beta");
        assert_eq!(docs[1].category, Category::Guideline);

        std::fs::write(
            &m,
            "{\"id\":\"a\",\"category\":\"textbook\",\"path\":\"a.txt\"}\n{\"id\":\"a\",\"category\":\"lecture\",\"path\":\"b.txt\"}\n",
        )
        .unwrap();
        assert!(matches!(load(&m), Err(DataError::Corpus(_))));
    }
}
