//! Byte-level byte-pair-encoding tokenizer.
//!
//! Ids `0..5` are the special tokens, ids `5..261` the 256 raw bytes, and
//! every id after that is one learned merge, in the order it was learned.
//! Text is pre-segmented into maximal runs of whitespace and non-whitespace
//! bytes; merges never cross a segment boundary.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const MASK: u32 = 3;
pub const UNK: u32 = 4;

pub const SPECIAL_TOKENS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<mask>", "<unk>"];
const BYTE_BASE: u32 = SPECIAL_TOKENS.len() as u32;
/// Specials plus the byte alphabet.
pub const BASE_VOCAB: usize = SPECIAL_TOKENS.len() + 256;

const HEADER: &str = "bpe-vocab 1";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TokenizerError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("target vocab size {0} must exceed the {BASE_VOCAB} base symbols")]
    VocabTooSmall(usize),
    #[error("token id {id} out of range for vocab of {size}")]
    UnknownId { id: u32, size: usize },
    #[error("vocab file line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// Trained merge table plus the derived id ↔ bytes maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeVocab {
    merges: Vec<(u32, u32)>,
    tokens: Vec<Vec<u8>>,
    ranks: HashMap<(u32, u32), u32>,
}

fn is_space(b: u8) -> bool {
    b.is_ascii_whitespace() || b == 0x0b
}

/// Splits bytes into alternating whitespace / non-whitespace runs.
fn segments(text: &[u8]) -> impl Iterator<Item = &[u8]> {
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= text.len() {
            return None;
        }
        let kind = is_space(text[start]);
        let len = text[start..].iter().position(|&b| is_space(b) != kind).unwrap_or(text.len() - start);
        let seg = &text[start..start + len];
        start += len;
        Some(seg)
    })
}

fn merge_pair(symbols: &mut Vec<u32>, pair: (u32, u32), new_id: u32) {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
            out.push(new_id);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    *symbols = out;
}

impl BpeVocab {
    fn base() -> Self {
        let mut tokens: Vec<Vec<u8>> = SPECIAL_TOKENS.iter().map(|_| Vec::new()).collect();
        tokens.extend((0..=255u8).map(|b| vec![b]));
        BpeVocab { merges: Vec::new(), tokens, ranks: HashMap::new() }
    }

    fn push_merge(&mut self, pair: (u32, u32)) -> u32 {
        let id = self.tokens.len() as u32;
        let mut bytes = self.tokens[pair.0 as usize].clone();
        bytes.extend_from_slice(&self.tokens[pair.1 as usize]);
        self.tokens.push(bytes);
        self.ranks.insert(pair, self.merges.len() as u32);
        self.merges.push(pair);
        id
    }

    /// Learns merges greedily: the most frequent adjacent pair wins, ties go
    /// to the lexicographically smallest `(left bytes, right bytes)`. Stops at
    /// `target_vocab_size` or when no pair occurs at least twice.
    pub fn train<I, S>(documents: I, target_vocab_size: usize) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        if target_vocab_size <= BASE_VOCAB {
            return Err(TokenizerError::VocabTooSmall(target_vocab_size));
        }
        let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for doc in documents {
            for seg in segments(doc.as_ref()) {
                *counts.entry(seg.to_vec()).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut words: Vec<(Vec<u32>, usize)> =
            counts.into_iter().map(|(w, c)| (w.iter().map(|&b| BYTE_BASE + b as u32).collect(), c)).collect();

        let mut vocab = Self::base();
        while vocab.tokens.len() < target_vocab_size {
            let mut pairs: HashMap<(u32, u32), usize> = HashMap::new();
            for (syms, c) in &words {
                for w in syms.windows(2) {
                    *pairs.entry((w[0], w[1])).or_default() += c;
                }
            }
            let best = pairs.into_iter().min_by(|(pa, ca), (pb, cb)| {
                cb.cmp(ca).then_with(|| {
                    let key = |p: &(u32, u32)| (vocab.tokens[p.0 as usize].clone(), vocab.tokens[p.1 as usize].clone());
                    key(pa).cmp(&key(pb))
                })
            });
            let Some((pair, count)) = best else { break };
            if count < 2 {
                break;
            }
            let id = vocab.push_merge(pair);
            for (syms, _) in &mut words {
                if syms.len() > 1 {
                    merge_pair(syms, pair, id);
                }
            }
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Bytes a token decodes to; empty for special tokens.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    /// First id whose bytes equal `bytes` (specials excluded).
    pub fn id_of(&self, bytes: &[u8]) -> Option<u32> {
        self.tokens
            .iter()
            .enumerate()
            .skip(SPECIAL_TOKENS.len())
            .find(|(_, t)| t.as_slice() == bytes)
            .map(|(i, _)| i as u32)
    }

    pub fn encode(&self, text: &[u8]) -> Vec<u32> {
        let mut out = Vec::with_capacity(text.len());
        for seg in segments(text) {
            let mut syms: Vec<u32> = seg.iter().map(|&b| BYTE_BASE + b as u32).collect();
            loop {
                let best =
                    syms.windows(2).filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&r| (r, (w[0], w[1])))).min();
                let Some((rank, pair)) = best else { break };
                merge_pair(&mut syms, pair, BASE_VOCAB as u32 + rank);
            }
            out.extend(syms);
        }
        out
    }

    pub fn encode_str(&self, text: &str) -> Vec<u32> {
        self.encode(text.as_bytes())
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<u8>, TokenizerError> {
        let mut out = Vec::new();
        for &id in ids {
            let t = self.tokens.get(id as usize).ok_or(TokenizerError::UnknownId { id, size: self.tokens.len() })?;
            out.extend_from_slice(t);
        }
        Ok(out)
    }

    /// Decodes and replaces invalid UTF-8 sequences.
    pub fn decode_lossy(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        Ok(String::from_utf8_lossy(&self.decode(ids)?).into_owned())
    }

    /// Line-oriented vocab file: header, special tokens, byte alphabet, then
    /// one merge per line as `<hex left> <hex right>` in learned order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{HEADER}").unwrap();
        for (i, name) in SPECIAL_TOKENS.iter().enumerate() {
            writeln!(s, "special {i} {name}").unwrap();
        }
        writeln!(s, "bytes {BYTE_BASE} 256").unwrap();
        writeln!(s, "merges {}", self.merges.len()).unwrap();
        for &(a, b) in &self.merges {
            writeln!(s, "{} {}", hex::encode(&self.tokens[a as usize]), hex::encode(&self.tokens[b as usize])).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let err = |line: usize, reason: &str| TokenizerError::Format { line, reason: reason.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut expect = |want: String| -> Result<(), TokenizerError> {
            match lines.next() {
                Some((_, l)) if l == want => Ok(()),
                Some((n, l)) => Err(err(n, &format!("expected `{want}`, found `{l}`"))),
                None => Err(err(0, &format!("missing `{want}`"))),
            }
        };
        expect(HEADER.to_string())?;
        for (i, name) in SPECIAL_TOKENS.iter().enumerate() {
            expect(format!("special {i} {name}"))?;
        }
        expect(format!("bytes {BYTE_BASE} 256"))?;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).skip(7);
        let (n, count_line) = lines.next().ok_or_else(|| err(8, "missing merge count"))?;
        let count: usize =
            count_line.strip_prefix("merges ").and_then(|c| c.parse().ok()).ok_or_else(|| err(n, "bad merge count"))?;

        let mut vocab = Self::base();
        let mut by_bytes: HashMap<Vec<u8>, u32> = HashMap::new();
        for (i, t) in vocab.tokens.iter().enumerate().skip(SPECIAL_TOKENS.len()) {
            by_bytes.insert(t.clone(), i as u32);
        }
        for _ in 0..count {
            let (n, line) = lines.next().ok_or_else(|| err(0, "fewer merges than declared"))?;
            let (l, r) = line.split_once(' ').ok_or_else(|| err(n, "merge needs two tokens"))?;
            let lookup = |h: &str| -> Result<u32, TokenizerError> {
                let bytes = hex::decode(h).map_err(|_| err(n, "invalid hex"))?;
                by_bytes.get(&bytes).copied().ok_or_else(|| err(n, "merge references an unknown token"))
            };
            let pair = (lookup(l)?, lookup(r)?);
            if vocab.ranks.contains_key(&pair) {
                return Err(err(n, "duplicate merge"));
            }
            let id = vocab.push_merge(pair);
            by_bytes.entry(vocab.tokens[id as usize].clone()).or_insert(id);
        }
        if let Some((n, _)) = lines.next() {
            return Err(err(n, "trailing content after merges"));
        }
        Ok(vocab)
    }

    /// SHA-256 of the serialized vocab, used to tie checkpoints to a tokenizer.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_merge_on_abab() {
        let v = BpeVocab::train(["abab abab"], BASE_VOCAB + 1).unwrap();
        assert_eq!(v.merges().len(), 1);
        assert_eq!(v.token_bytes(BASE_VOCAB as u32).unwrap(), b"ab");
    }

    #[test]
    fn encode_abab_uses_learned_token() {
        let v = BpeVocab::train(["abab abab"], BASE_VOCAB + 1).unwrap();
        let ab = v.id_of(b"ab").unwrap();
        assert_eq!(v.encode(b"abab"), vec![ab, ab]);
    }

    #[test]
    fn single_character_words_learn_nothing() {
        let v = BpeVocab::train(["a a a a\na"], 400).unwrap();
        assert!(v.merges().is_empty());
        assert_eq!(v.len(), BASE_VOCAB);
    }

    #[test]
    fn ties_break_lexicographically() {
        // "xy" and "ab" both occur twice; "ab" sorts first.
        let v = BpeVocab::train(["xy ab xy ab"], BASE_VOCAB + 1).unwrap();
        assert_eq!(v.token_bytes(v.merges()[0].0).unwrap(), b"a");
    }

    #[test]
    fn merges_stay_inside_segments() {
        // "a b" repeated: the pair ("a", " ") would cross a boundary.
        let v = BpeVocab::train(["a b a b a b"], 300).unwrap();
        for &(l, r) in v.merges() {
            let joined = [v.token_bytes(l).unwrap(), v.token_bytes(r).unwrap()].concat();
            let spaces = joined.iter().filter(|&&b| is_space(b)).count();
            assert!(spaces == 0 || spaces == joined.len());
        }
    }

    #[test]
    fn errors() {
        assert_eq!(BpeVocab::train(Vec::<&str>::new(), 300), Err(TokenizerError::EmptyCorpus));
        assert_eq!(BpeVocab::train(["abc"], BASE_VOCAB), Err(TokenizerError::VocabTooSmall(BASE_VOCAB)));
        let v = BpeVocab::train(["abab"], 300).unwrap();
        assert!(matches!(v.decode(&[v.len() as u32]), Err(TokenizerError::UnknownId { .. })));
    }

    #[test]
    fn empty_text_encodes_to_nothing() {
        let v = BpeVocab::train(["abab"], 300).unwrap();
        assert!(v.encode(b"").is_empty());
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = BpeVocab::train(["肝功能异常 肝功能 hello hello world"], 320).unwrap();
        let text = v.to_text();
        let back = BpeVocab::from_text(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn malformed_vocab_file_reports_line() {
        let v = BpeVocab::train(["abab abab"], 300).unwrap();
        let bad = v.to_text().replace("6162", "zz");
        assert!(BpeVocab::from_text(&bad).is_err());
        let truncated: String = v.to_text().lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(BpeVocab::from_text(&truncated).is_err());
    }
}
