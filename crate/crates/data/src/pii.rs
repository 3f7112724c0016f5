//! Replacement of personal identifiers with typed placeholders.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiiPattern {
    /// Replacement text, e.g. `[PHONE]`.
    pub placeholder: String,
    pub regex: String,
    /// Skip matches that sit inside a longer run of ASCII digits.
    #[serde(default)]
    pub digit_boundary: bool,
}

/// Patterns apply in order, each to the output of the previous one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiiConfig {
    pub patterns: Vec<PiiPattern>,
}

impl Default for PiiConfig {
    fn default() -> Self {
        let p = |placeholder: &str, regex: &str, digit_boundary| PiiPattern {
            placeholder: placeholder.into(),
            regex: regex.into(),
            digit_boundary,
        };
        PiiConfig {
            patterns: vec![
                p("[EMAIL]", r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}", false),
                p("[ID]", r"[1-9][0-9]{16}[0-9Xx]", true),
                p("[PHONE]", r"(?:\+?86[- ]?)?1[3-9][0-9]{9}|0[0-9]{2,3}-[0-9]{7,8}", true),
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scrubber {
    rules: Vec<(Regex, String, bool)>,
}

impl Scrubber {
    pub fn new(cfg: &PiiConfig) -> Result<Self> {
        let rules = cfg
            .patterns
            .iter()
            .map(|p| {
                if p.placeholder.is_empty() {
                    return Err(DataError::Config("pii placeholder must not be empty".into()));
                }
                let re =
                    Regex::new(&p.regex).map_err(|e| DataError::Config(format!("pii pattern `{}`: {e}", p.regex)))?;
                if re.is_match(&p.placeholder) {
                    return Err(DataError::Config(format!(
                        "pii placeholder `{}` matches its own pattern",
                        p.placeholder
                    )));
                }
                Ok((re, p.placeholder.clone(), p.digit_boundary))
            })
            .collect::<Result<_>>()?;
        Ok(Scrubber { rules })
    }

    /// Applies the rules until nothing changes. A replacement can expose a
    /// match that an adjacent digit previously suppressed, so one pass is
    /// not always a fixed point.
    pub fn scrub(&self, text: &str) -> String {
        let mut text = text.to_string();
        loop {
            let next = self.pass(&text);
            if next == text {
                return text;
            }
            text = next;
        }
    }

    fn pass(&self, text: &str) -> String {
        let mut text = text.to_string();
        for (re, placeholder, boundary) in &self.rules {
            let mut out = String::with_capacity(text.len());
            let mut last = 0;
            for m in re.find_iter(&text) {
                if *boundary && digit_adjacent(&text, m.start(), m.end()) {
                    continue;
                }
                out.push_str(&text[last..m.start()]);
                out.push_str(placeholder);
                last = m.end();
            }
            out.push_str(&text[last..]);
            text = out;
        }
        text
    }
}

fn digit_adjacent(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back().is_some_and(|c| c.is_ascii_digit());
    let after = text[end..].chars().next().is_some_and(|c| c.is_ascii_digit());
    before || after
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scrub(t: &str) -> String {
        Scrubber::new(&PiiConfig::default()).unwrap().scrub(t)
    }

    #[test]
    fn mobile_number() {
        assert_eq!(scrub("联系 13812345678"), "联系 [PHONE]");
        assert_eq!(scrub("电话+86 13912345678。"), "电话[PHONE]。");
        assert_eq!(scrub("座机 010-12345678"), "座机 [PHONE]");
    }

    #[test]
    fn id_and_email() {
        assert_eq!(scrub("身份证110101199003071234，"), "身份证[ID]，");
        assert_eq!(scrub("ID 11010119900307123X"), "ID [ID]");
        assert_eq!(scrub("mail a.b@hosp.example.cn now"), "mail [EMAIL] now");
    }

    #[test]
    fn no_match_is_unchanged() {
        let t = "患者血压 140/90 mmHg，心率 72 次/分。";
        assert_eq!(scrub(t), t);
    }

    #[test]
    fn digits_inside_longer_runs_are_left_alone() {
        let t = "订单 12381381234567899912";
        assert_eq!(scrub(t), t);
    }

    #[test]
    fn replacement_exposing_a_match_is_scrubbed_too() {
        assert_eq!(scrub("10000000000000000X13000000000"), "[ID][PHONE]");
    }

    #[test]
    fn placeholder_matching_its_pattern_is_rejected() {
        let cfg = PiiConfig {
            patterns: vec![PiiPattern { placeholder: "[X]".into(), regex: r"\[X\]".into(), digit_boundary: false }],
        };
        assert!(Scrubber::new(&cfg).is_err());
    }
}
