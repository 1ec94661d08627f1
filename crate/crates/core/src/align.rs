//! Word-level alignment of a noisy ASR transcript with its cleaned version,
//! and transfer of word timing onto the cleaned words.
//!
//! The aligner is dynamic time warping over the word grid. A path starts at
//! `(0, 0)` and ends at `(n-1, m-1)`; each step advances the noisy index, the
//! clean index, or both. Step costs:
//!
//! * the first pair and every diagonal step: `levenshtein(noisy[i], clean[j])`
//! * advancing only the clean index onto `j`: the length of `clean[j]`
//! * advancing only the noisy index onto `i`: the length of `noisy[i]`
//!
//! Equal-cost predecessors resolve to diagonal, then clean-only, then
//! noisy-only. Memory is `O(n * m)` bytes for the back-pointers plus two rows
//! of costs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TimedWord;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("{0} word sequence is empty")]
    EmptyInput(&'static str),
    #[error("clean word {0} has no aligned noisy word")]
    UnalignedCleanWord(usize),
    #[error("alignment pair ({noisy}, {clean}) is out of range")]
    OutOfRange { noisy: usize, clean: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// `(noisy_index, clean_index)` pairs in path order.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: u64,
}

impl Alignment {
    /// True when the pairs form a monotone, fully covering path over an
    /// `n x m` grid with unit steps.
    pub fn is_valid_path(&self, n: usize, m: usize) -> bool {
        let Some(&first) = self.pairs.first() else {
            return false;
        };
        if first != (0, 0) || self.pairs.last() != Some(&(n.wrapping_sub(1), m.wrapping_sub(1))) {
            return false;
        }
        self.pairs.windows(2).all(|w| {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            matches!((di, dj), (1, 1) | (0, 1) | (1, 0))
        })
    }
}

/// Character-level edit distance with unit costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Step {
    Start,
    Both,
    Clean,
    Noisy,
}

pub fn dtw_align<N: AsRef<str>, C: AsRef<str>>(noisy: &[N], clean: &[C]) -> Result<Alignment, AlignError> {
    if noisy.is_empty() {
        return Err(AlignError::EmptyInput("noisy"));
    }
    if clean.is_empty() {
        return Err(AlignError::EmptyInput("clean"));
    }
    let (n, m) = (noisy.len(), clean.len());
    let noisy_len: Vec<u64> = noisy.iter().map(|w| w.as_ref().chars().count() as u64).collect();
    let clean_len: Vec<u64> = clean.iter().map(|w| w.as_ref().chars().count() as u64).collect();

    let mut back = vec![Step::Start; n * m];
    let mut prev_row = vec![0u64; m];
    let mut row = vec![0u64; m];
    for i in 0..n {
        for j in 0..m {
            if i == 0 && j == 0 {
                row[0] = levenshtein(noisy[0].as_ref(), clean[0].as_ref()) as u64;
                continue;
            }
            let mut best: Option<(u64, Step)> = None;
            let mut consider = |cost: u64, step: Step| {
                if best.is_none_or(|(c, _)| cost < c) {
                    best = Some((cost, step));
                }
            };
            if i > 0 && j > 0 {
                consider(
                    prev_row[j - 1] + levenshtein(noisy[i].as_ref(), clean[j].as_ref()) as u64,
                    Step::Both,
                );
            }
            if j > 0 {
                consider(row[j - 1] + clean_len[j], Step::Clean);
            }
            if i > 0 {
                consider(prev_row[j] + noisy_len[i], Step::Noisy);
            }
            let (cost, step) = best.expect("at least one predecessor");
            row[j] = cost;
            back[i * m + j] = step;
        }
        std::mem::swap(&mut prev_row, &mut row);
    }
    let total_cost = prev_row[m - 1];

    let mut pairs = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        pairs.push((i, j));
        match back[i * m + j] {
            Step::Start => break,
            Step::Both => {
                i -= 1;
                j -= 1;
            }
            Step::Clean => j -= 1,
            Step::Noisy => i -= 1,
        }
    }
    pairs.reverse();
    Ok(Alignment { pairs, total_cost })
}

/// Gives each clean word the mean start and mean end of the noisy words
/// aligned to it.
pub fn transfer_timing<C: AsRef<str>>(
    alignment: &Alignment,
    noisy: &[TimedWord],
    clean: &[C],
) -> Result<Vec<TimedWord>, AlignError> {
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); clean.len()];
    for &(ni, ci) in &alignment.pairs {
        if ni >= noisy.len() || ci >= clean.len() {
            return Err(AlignError::OutOfRange { noisy: ni, clean: ci });
        }
        let acc = &mut sums[ci];
        acc.0 += noisy[ni].start;
        acc.1 += noisy[ni].end;
        acc.2 += 1;
    }
    sums.iter()
        .zip(clean)
        .enumerate()
        .map(|(ci, (&(s, e, k), word))| {
            if k == 0 {
                return Err(AlignError::UnalignedCleanWord(ci));
            }
            Ok(TimedWord::new(word.as_ref(), s / k as f64, e / k as f64))
        })
        .collect()
}
