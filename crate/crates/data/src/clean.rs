//! Text normalization: control characters, whitespace and boilerplate lines.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::RawDocument;
use crate::error::{DataError, Result};

pub const EMPTY_AFTER_CLEAN: &str = "empty-after-clean";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    /// A whole line is removed when any of these matches it after
    /// whitespace normalization.
    pub boilerplate: Vec<String>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            boilerplate: vec![
                r"(?i)^(copyright|©|all rights reserved)".into(),
                r"^(版权所有|本文来源|转载请注明|免责声明)".into(),
                r"(?i)^page \d+( of \d+)?$".into(),
                r"^第\s?\d+\s?页(\s?共\s?\d+\s?页)?$".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cleaned {
    Kept(RawDocument),
    Dropped { id: String, reason: &'static str },
}

#[derive(Debug, Clone)]
pub struct Cleaner {
    boilerplate: Vec<Regex>,
}

impl Cleaner {
    pub fn new(cfg: &CleanConfig) -> Result<Self> {
        let boilerplate = cfg
            .boilerplate
            .iter()
            .map(|p| Regex::new(p).map_err(|e| DataError::Config(format!("clean.boilerplate `{p}`: {e}"))))
            .collect::<Result<_>>()?;
        Ok(Cleaner { boilerplate })
    }

    /// Control characters become spaces, whitespace runs collapse to one
    /// space per line, and blank or boilerplate lines are removed.
    pub fn clean_text(&self, text: &str) -> String {
        let mut out = Vec::new();
        for line in text.split('\n') {
            let line: String = line.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
            let line = line.split_whitespace().collect::<Vec<_>>().join(" ");
            if line.is_empty() || self.boilerplate.iter().any(|r| r.is_match(&line)) {
                continue;
            }
            out.push(line);
        }
        out.join("\n")
    }

    pub fn clean(&self, doc: RawDocument) -> Cleaned {
        let text = self.clean_text(&doc.text);
        if text.is_empty() {
            Cleaned::Dropped { id: doc.id, reason: EMPTY_AFTER_CLEAN }
        } else {
            Cleaned::Kept(RawDocument { text, ..doc })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Category;

    fn doc(text: &str) -> RawDocument {
        RawDocument { id: "d".into(), category: Category::Lecture, text: text.into() }
    }

    fn cleaner() -> Cleaner {
        Cleaner::new(&CleanConfig::default()).unwrap()
    }

    #[test]
    fn control_characters_become_a_single_space() {
        assert_eq!(cleaner().clean_text("text\u{0000}\u{0007}here"), "text here");
    }

    #[test]
    fn whitespace_only_document_is_dropped() {
        assert_eq!(
            cleaner().clean(doc(" \t\r\n\u{3000}\n")),
            Cleaned::Dropped { id: "d".into(), reason: EMPTY_AFTER_CLEAN }
        );
    }

    #[test]
    fn boilerplate_lines_removed() {
        let t = "高血压的诊断\n版权所有 某出版社\n  血压  持续升高 \nPage 3 of 10\n第 4 页";
        assert_eq!(cleaner().clean_text(t), "高血压的诊断\n血压 持续升高");
    }

    #[test]
    fn bad_pattern_is_a_config_error() {
        let cfg = CleanConfig { boilerplate: vec!["(".into()] };
        assert!(matches!(Cleaner::new(&cfg), Err(DataError::Config(_))));
    }
}
