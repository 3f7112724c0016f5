//! Tokenization and optional normalization for text-matching metrics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenization {
    /// Characters when the text contains CJK ideographs, words otherwise.
    #[default]
    Auto,
    Chars,
    Words,
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32, 0x3400..=0x4dbf | 0x4e00..=0x9fff | 0xf900..=0xfaff | 0x20000..=0x2fa1f)
}

/// Characters drop whitespace; words split on whitespace.
pub fn tokenize(text: &str, mode: Tokenization) -> Vec<String> {
    let chars = match mode {
        Tokenization::Chars => true,
        Tokenization::Words => false,
        Tokenization::Auto => text.chars().any(is_cjk),
    };
    if chars {
        text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect()
    } else {
        text.split_whitespace().map(String::from).collect()
    }
}

/// Folds full-width ASCII to half-width, lowercases, and trims.
pub fn normalize(text: &str) -> String {
    text.chars()
        .map(|c| match c as u32 {
            0xff01..=0xff5e => char::from_u32(c as u32 - 0xfee0).unwrap_or(c),
            0x3000 => ' ',
            _ => c,
        })
        .flat_map(char::to_lowercase)
        .collect::<String>()
        .trim()
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_mode() {
        assert_eq!(tokenize("高 血压", Tokenization::Auto), ["高", "血", "压"]);
        assert_eq!(tokenize("the cat", Tokenization::Auto), ["the", "cat"]);
    }

    #[test]
    fn full_width_folding() {
        assert_eq!(normalize("ＡＢＣ１２３　"), "abc123");
    }
}
