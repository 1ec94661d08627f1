//! Synthetic ASR-style corruption of clean text (training pairs for a
//! transcript denoiser) and the perplexity gate applied to denoised
//! transcripts.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::item_rng;
use crate::tokenizer::Tokenizer;

#[derive(Debug, Error, PartialEq)]
pub enum DenoiseError {
    #[error("{name} = {value} is not a probability")]
    Probability { name: &'static str, value: f64 },
    #[error("filler lexicon is empty while filler_prob > 0")]
    EmptyLexicon,
    #[error("perplexity list is empty")]
    EmptyPerplexities,
    #[error("perplexity threshold must be positive and finite, got {0}")]
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    pub replace_prob: f64,
    pub homophone_share: f64,
    pub filler_prob: f64,
    pub filler_lexicon: Vec<String>,
    pub rng_seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            replace_prob: 0.01,
            homophone_share: 0.25,
            filler_prob: 0.01,
            filler_lexicon: ["umm", "hmm", "yeah"].map(String::from).to_vec(),
            rng_seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<(), DenoiseError> {
        for (name, value) in [
            ("replace_prob", self.replace_prob),
            ("homophone_share", self.homophone_share),
            ("filler_prob", self.filler_prob),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(DenoiseError::Probability { name, value });
            }
        }
        if self.filler_prob > 0.0 && self.filler_lexicon.is_empty() {
            return Err(DenoiseError::EmptyLexicon);
        }
        Ok(())
    }
}

/// Words grouped by shared pronunciation.
///
/// Symmetric by construction: every word listed as a homophone of `a` has
/// `a` among its own homophones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PronunciationTable {
    homophones: BTreeMap<String, BTreeSet<String>>,
}

impl PronunciationTable {
    /// Parses the CMU Pronouncing Dictionary text format:
    /// `WORD  PH1 PH2 ...`, alternates written `WORD(2)`, comments start
    /// with `;;;`. Lines without a pronunciation are ignored.
    pub fn parse_cmudict(text: &str) -> Self {
        let mut by_pron: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(";;;") {
                continue;
            }
            let mut parts = line.split_whitespace();
            let Some(head) = parts.next() else { continue };
            let phones: Vec<&str> = parts.collect();
            if phones.is_empty() {
                continue;
            }
            let word = match head.find('(') {
                Some(i) if head.ends_with(')') && i > 0 => &head[..i],
                _ => head,
            };
            by_pron
                .entry(phones.join(" "))
                .or_default()
                .insert(word.to_lowercase());
        }
        let mut table = Self::default();
        for words in by_pron.values().filter(|w| w.len() > 1) {
            for w in words {
                let entry = table.homophones.entry(w.clone()).or_default();
                entry.extend(words.iter().filter(|o| *o != w).cloned());
            }
        }
        table
    }

    pub fn from_groups<I, G, S>(groups: I) -> Self
    where
        I: IntoIterator<Item = G>,
        G: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = Self::default();
        for group in groups {
            let words: BTreeSet<String> = group.into_iter().map(|s| s.into().to_lowercase()).collect();
            for w in &words {
                table
                    .homophones
                    .entry(w.clone())
                    .or_default()
                    .extend(words.iter().filter(|o| *o != w).cloned());
            }
        }
        table.homophones.retain(|_, v| !v.is_empty());
        table
    }

    pub fn homophones(&self, word: &str) -> Option<&BTreeSet<String>> {
        self.homophones.get(word).filter(|s| !s.is_empty())
    }

    pub fn len(&self) -> usize {
        self.homophones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.homophones.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.homophones.iter().all(|(a, set)| {
            set.iter()
                .all(|b| self.homophones.get(b).is_some_and(|back| back.contains(a)))
        })
    }
}

fn punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{P}").expect("static pattern"))
}

/// Lowercases and removes every Unicode punctuation character (categories
/// `P*`). Words left empty are dropped.
pub fn normalize_words<S: AsRef<str>>(words: &[S]) -> Vec<String> {
    words
        .iter()
        .flat_map(|w| w.as_ref().split_whitespace())
        .map(|w| punctuation().replace_all(&w.to_lowercase(), "").into_owned())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CorruptionStats {
    /// Words after normalization.
    pub words: usize,
    pub replaced: usize,
    pub homophone_swaps: usize,
    pub random_bpe: usize,
    pub fillers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corrupted {
    pub words: Vec<String>,
    pub stats: CorruptionStats,
}

/// Corrupts one document using the RNG stream of `cfg.rng_seed`.
///
/// Per word, in order: a filler draw (insert a uniformly chosen filler
/// before the word), then a replacement draw. Replacements are homophones
/// with probability `homophone_share` when the table has one, otherwise a
/// uniformly random token sequence with as many tokens as the word.
pub fn corrupt_document<S: AsRef<str>>(
    clean: &[S],
    cfg: &CorruptionConfig,
    table: &PronunciationTable,
    tokenizer: &dyn Tokenizer,
) -> Result<Corrupted, DenoiseError> {
    corrupt_with_rng(clean, cfg, table, tokenizer, &mut crate::seed::seeded_rng(cfg.rng_seed))
}

/// Same as [`corrupt_document`] with the stream derived from
/// `(cfg.rng_seed, doc_id)`.
pub fn corrupt_document_keyed<S: AsRef<str>>(
    clean: &[S],
    doc_id: &str,
    cfg: &CorruptionConfig,
    table: &PronunciationTable,
    tokenizer: &dyn Tokenizer,
) -> Result<Corrupted, DenoiseError> {
    corrupt_with_rng(clean, cfg, table, tokenizer, &mut item_rng(cfg.rng_seed, doc_id))
}

fn corrupt_with_rng<S: AsRef<str>, R: Rng>(
    clean: &[S],
    cfg: &CorruptionConfig,
    table: &PronunciationTable,
    tokenizer: &dyn Tokenizer,
    rng: &mut R,
) -> Result<Corrupted, DenoiseError> {
    cfg.validate()?;
    let words = normalize_words(clean);
    let mut stats = CorruptionStats {
        words: words.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(words.len() + words.len() / 50 + 1);
    let mut ordinary: Option<Vec<u32>> = None;

    for word in words {
        if rng.gen_bool(cfg.filler_prob) {
            let filler = cfg.filler_lexicon.choose(rng).expect("validated non-empty");
            out.push(filler.clone());
            stats.fillers += 1;
        }
        if !rng.gen_bool(cfg.replace_prob) {
            out.push(word);
            continue;
        }
        stats.replaced += 1;
        let use_homophone = rng.gen_bool(cfg.homophone_share);
        if use_homophone {
            if let Some(set) = table.homophones(&word) {
                let idx = rng.gen_range(0..set.len());
                out.push(set.iter().nth(idx).expect("index in range").clone());
                stats.homophone_swaps += 1;
                continue;
            }
        }
        let ids = ordinary.get_or_insert_with(|| tokenizer.ordinary_ids());
        out.push(random_bpe_word(&word, tokenizer, ids, rng));
        stats.random_bpe += 1;
    }
    Ok(Corrupted { words: out, stats })
}

fn random_bpe_word<R: Rng>(word: &str, tokenizer: &dyn Tokenizer, ordinary: &[u32], rng: &mut R) -> String {
    let n = tokenizer.encode_word(word).len().max(1);
    if ordinary.is_empty() {
        return word.to_owned();
    }
    let mut last = String::new();
    for _ in 0..16 {
        let ids: Vec<u32> = (0..n).map(|_| ordinary[rng.gen_range(0..ordinary.len())]).collect();
        last = tokenizer
            .decode(&ids)
            .chars()
            .filter(|c| !c.is_whitespace() && !c.is_control())
            .collect();
        if !last.is_empty() {
            return last;
        }
    }
    if last.is_empty() {
        last = format!("<{}>", ordinary[0]);
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "decision", rename_all = "lowercase")]
pub enum GateDecision {
    Accept,
    Reject { group: usize, perplexity: f64 },
}

impl GateDecision {
    pub fn is_accept(&self) -> bool {
        matches!(self, Self::Accept)
    }
}

pub const DEFAULT_PERPLEXITY_THRESHOLD: f64 = 200.0;

/// Rejects when any group's perplexity is strictly above `threshold`,
/// reporting the first such group.
pub fn perplexity_gate(per_group: &[f64], threshold: f64) -> Result<GateDecision, DenoiseError> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(DenoiseError::Threshold(threshold));
    }
    if per_group.is_empty() {
        return Err(DenoiseError::EmptyPerplexities);
    }
    Ok(per_group
        .iter()
        .position(|&p| p > threshold || p.is_nan())
        .map_or(GateDecision::Accept, |group| GateDecision::Reject {
            group,
            perplexity: per_group[group],
        }))
}
