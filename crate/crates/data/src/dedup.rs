//! Exact and near-duplicate removal.
//!
//! Exact duplicates are found by SHA-256 of the text. Near duplicates are
//! found with MinHash signatures over character shingles, bucketed by LSH
//! bands; every candidate pair is confirmed with the exact Jaccard similarity
//! of the shingle sets before a document is removed. Documents are processed
//! in input order and compared only against documents already kept, so the
//! first member of any duplicate group survives.

use std::collections::{HashMap, HashSet};
use std::hash::Hasher;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::RawDocument;
use crate::error::{DataError, Result};

/// Modulus of the universal hash family, the Mersenne prime 2^61 − 1.
const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    /// Shingle length in characters.
    pub shingle: usize,
    pub threshold: f64,
    pub num_perm: usize,
    pub bands: usize,
    pub seed: u64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig { shingle: 5, threshold: 0.9, num_perm: 128, bands: 32, seed: 0x5eed }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DataError::Config(format!("dedup: {m}")));
        if self.shingle == 0 {
            return bad("shingle must be ≥ 1");
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return bad("threshold must lie in (0, 1]");
        }
        if self.bands == 0 || self.num_perm == 0 || !self.num_perm.is_multiple_of(self.bands) {
            return bad("num_perm must be a positive multiple of bands");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Match {
    Exact,
    Near { jaccard: f64 },
}

/// A removed document and the kept document it duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub id: String,
    pub kept: String,
    #[serde(flatten)]
    pub matched: Match,
}

#[derive(Debug, Clone, Default)]
pub struct Deduped {
    pub kept: Vec<RawDocument>,
    pub removed: Vec<Removal>,
}

/// The set of distinct character `n`-grams. Texts shorter than `n`
/// characters contribute themselves as a single shingle.
pub fn shingles(text: &str, n: usize) -> HashSet<&str> {
    let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len())).collect();
    let chars = bounds.len() - 1;
    if chars == 0 {
        return HashSet::new();
    }
    if chars < n {
        return HashSet::from([text]);
    }
    (0..=chars - n).map(|i| &text[bounds[i]..bounds[i + n]]).collect()
}

/// `|a ∩ b| / |a ∪ b|`; two empty sets are identical.
pub fn jaccard(a: &HashSet<&str>, b: &HashSet<&str>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|s| large.contains(*s)).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

fn fnv64(s: &str) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(s.as_bytes());
    h.finish()
}

/// MinHash under `h_i(x) = (a_i·x + b_i) mod (2^61 − 1)`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    coeffs: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(num_perm: usize, seed: u64) -> Self {
        let mut rng = clinlm_core::rng::seeded(seed);
        let coeffs = (0..num_perm).map(|_| (rng.gen_range(1..MERSENNE_61), rng.gen_range(0..MERSENNE_61))).collect();
        MinHasher { coeffs }
    }

    pub fn signature(&self, shingles: &HashSet<&str>) -> Vec<u64> {
        let hashes: Vec<u64> = shingles.iter().map(|s| fnv64(s) % MERSENNE_61).collect();
        self.coeffs
            .iter()
            .map(|&(a, b)| {
                hashes
                    .iter()
                    .map(|&x| ((a as u128 * x as u128 + b as u128) % MERSENNE_61 as u128) as u64)
                    .min()
                    .unwrap_or(u64::MAX)
            })
            .collect()
    }
}

/// Estimated Jaccard: the fraction of agreeing signature slots.
pub fn estimate(a: &[u64], b: &[u64]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

pub fn dedup(docs: Vec<RawDocument>, cfg: &DedupConfig) -> Result<Deduped> {
    cfg.validate()?;
    let hasher = MinHasher::new(cfg.num_perm, cfg.seed);
    let rows = cfg.num_perm / cfg.bands;
    let mut digests: HashMap<[u8; 32], usize> = HashMap::new();
    let mut buckets: HashMap<(usize, &[u64]), Vec<usize>> = HashMap::new();
    let mut kept_sets: Vec<HashSet<&str>> = Vec::new();
    let mut kept_idx: Vec<usize> = Vec::new();
    let mut removed = Vec::new();

    let sigs: Vec<Vec<u64>> = docs.iter().map(|d| hasher.signature(&shingles(&d.text, cfg.shingle))).collect();

    for (i, doc) in docs.iter().enumerate() {
        let digest: [u8; 32] = Sha256::digest(doc.text.as_bytes()).into();
        if let Some(&k) = digests.get(&digest) {
            removed.push(Removal { id: doc.id.clone(), kept: docs[kept_idx[k]].id.clone(), matched: Match::Exact });
            continue;
        }
        let set = shingles(&doc.text, cfg.shingle);
        let sig = &sigs[i];
        let mut candidates: Vec<usize> = (0..cfg.bands)
            .filter_map(|band| buckets.get(&(band, &sig[band * rows..(band + 1) * rows])))
            .flatten()
            .copied()
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let best = candidates
            .into_iter()
            .map(|k| (k, jaccard(&set, &kept_sets[k])))
            .filter(|&(_, j)| j >= cfg.threshold)
            .fold(None, |acc: Option<(usize, f64)>, c| match acc {
                Some(a) if a.1 >= c.1 => Some(a),
                _ => Some(c),
            });
        if let Some((k, j)) = best {
            removed.push(Removal {
                id: doc.id.clone(),
                kept: docs[kept_idx[k]].id.clone(),
                matched: Match::Near { jaccard: j },
            });
            continue;
        }
        let k = kept_idx.len();
        digests.insert(digest, k);
        for band in 0..cfg.bands {
            buckets.entry((band, &sig[band * rows..(band + 1) * rows])).or_default().push(k);
        }
        kept_sets.push(set);
        kept_idx.push(i);
    }
    drop(buckets);
    drop(kept_sets);

    let keep: HashSet<usize> = kept_idx.into_iter().collect();
    let kept = docs.into_iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, d)| d).collect();
    Ok(Deduped { kept, removed })
}
