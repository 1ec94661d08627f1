//! Zero-shot story unscrambling: scoring frame orderings from pairwise
//! caption/frame relation probabilities, the independent-matching
//! (Hungarian) baseline, and the ordering metrics.

use std::cmp::Ordering;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_EXHAUSTIVE: usize = 8;
const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ReorderError {
    #[error("table has {got} values, expected {n}*{n}*{classes}")]
    TableSize { n: usize, classes: usize, got: usize },
    #[error("unsupported class count {0}, expected 2 or 4")]
    Classes(usize),
    #[error("distribution at (caption {caption}, frame {frame}) sums to {total} in probability space")]
    NotNormalized { caption: usize, frame: usize, total: f64 },
    #[error("non-finite or positive log-probability at index {0}")]
    BadLogProb(usize),
    #[error("not a permutation: {0:?}")]
    NotPermutation(Vec<usize>),
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("exhaustive search supports at most {MAX_EXHAUSTIVE} elements, got {0}")]
    TooLarge(usize),
    #[error("empty input")]
    Empty,
    #[error("similarity matrix is ragged")]
    Ragged,
    #[error("non-finite similarity at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("story {index}: {source}")]
    Story {
        index: usize,
        #[source]
        source: Box<ReorderError>,
    },
}

/// Relation of caption position `i` to the slot given to frame `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Same,
    /// The caption precedes the frame.
    Before,
    /// The caption comes after the frame.
    After,
    DifferentVideo,
}

impl Relation {
    pub fn between(caption_pos: usize, frame_slot: usize) -> Self {
        match caption_pos.cmp(&frame_slot) {
            Ordering::Equal => Self::Same,
            Ordering::Less => Self::Before,
            Ordering::Greater => Self::After,
        }
    }

    /// Column of this relation in a table with `classes` columns; `None`
    /// when the table form has no such class.
    fn column(self, classes: usize) -> Option<usize> {
        match (classes, self) {
            (4, r) => Some(r as usize),
            (2, Self::Before) => Some(0),
            (2, Self::After) => Some(1),
            _ => None,
        }
    }
}

/// Pairwise log-probabilities indexed `(caption, frame, class)`.
///
/// Four-class tables use `[same, before, after, different_video]`. The
/// two-class form holds `[before, after]`; `same` pairs then contribute
/// nothing to a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRelationTable {
    pub n: usize,
    #[serde(default = "four")]
    pub classes: usize,
    pub log_probs: Vec<f64>,
}

fn four() -> usize {
    4
}

impl PairwiseRelationTable {
    pub fn new(n: usize, classes: usize, log_probs: Vec<f64>) -> Result<Self, ReorderError> {
        let t = Self { n, classes, log_probs };
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<(), ReorderError> {
        if self.classes != 2 && self.classes != 4 {
            return Err(ReorderError::Classes(self.classes));
        }
        let expected = self
            .n
            .checked_mul(self.n)
            .and_then(|x| x.checked_mul(self.classes));
        if expected != Some(self.log_probs.len()) {
            return Err(ReorderError::TableSize {
                n: self.n,
                classes: self.classes,
                got: self.log_probs.len(),
            });
        }
        if let Some(i) = self.log_probs.iter().position(|&x| x.is_nan() || x == f64::INFINITY || x > 1e-9) {
            return Err(ReorderError::BadLogProb(i));
        }
        for caption in 0..self.n {
            for frame in 0..self.n {
                let total: f64 = self.dist(caption, frame).iter().map(|x| x.exp()).sum();
                if (total.ln()).abs() > NORMALIZATION_TOL {
                    return Err(ReorderError::NotNormalized { caption, frame, total });
                }
            }
        }
        Ok(())
    }

    fn dist(&self, caption: usize, frame: usize) -> &[f64] {
        let at = (caption * self.n + frame) * self.classes;
        &self.log_probs[at..at + self.classes]
    }

    pub fn log_prob(&self, caption: usize, frame: usize, rel: Relation) -> Option<f64> {
        rel.column(self.classes).map(|c| self.dist(caption, frame)[c])
    }

    /// Every class equally likely.
    pub fn uniform(n: usize) -> Self {
        Self {
            n,
            classes: 4,
            log_probs: vec![0.25f64.ln(); n * n * 4],
        }
    }

    /// A table that puts mass `p` on the relation implied by `truth` (frame
    /// `j` truly sits at slot `truth[j]`) and spreads the rest evenly.
    pub fn from_truth(truth: &Permutation, p: f64) -> Self {
        let n = truth.len();
        let rest = ((1.0 - p) / 3.0).ln();
        let mut log_probs = vec![rest; n * n * 4];
        for caption in 0..n {
            for frame in 0..n {
                let rel = Relation::between(caption, truth.slot(frame));
                log_probs[(caption * n + frame) * 4 + rel as usize] = p.ln();
            }
        }
        Self { n, classes: 4, log_probs }
    }

    /// Collapses a four-class table to `[before, after]`, renormalized.
    pub fn to_two_way(&self) -> Self {
        if self.classes == 2 {
            return self.clone();
        }
        let mut log_probs = Vec::with_capacity(self.n * self.n * 2);
        for caption in 0..self.n {
            for frame in 0..self.n {
                let d = self.dist(caption, frame);
                let (b, a) = (d[1], d[2]);
                let m = b.max(a);
                let z = if m == f64::NEG_INFINITY {
                    m
                } else {
                    m + ((b - m).exp() + (a - m).exp()).ln()
                };
                if z == f64::NEG_INFINITY {
                    log_probs.extend([0.5f64.ln(); 2]);
                } else {
                    log_probs.extend([b - z, a - z]);
                }
            }
        }
        Self {
            n: self.n,
            classes: 2,
            log_probs,
        }
    }

    pub fn parse_line(line: &str) -> Result<Self, TableParseError> {
        let t: Self = serde_json::from_str(line)?;
        t.check()?;
        Ok(t)
    }
}

#[derive(Debug, Error)]
pub enum TableParseError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Table(#[from] ReorderError),
}

/// `mapping[j]` is the slot frame `j` occupies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self, ReorderError> {
        let mut seen = vec![false; mapping.len()];
        for &x in &mapping {
            if x >= mapping.len() || std::mem::replace(&mut seen[x], true) {
                return Err(ReorderError::NotPermutation(mapping));
            }
        }
        Ok(Self(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn slot(&self, element: usize) -> usize {
        self.0[element]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = ReorderError;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

/// Sum over every (caption, frame) pair of the log-probability of the
/// relation `sigma` implies for that pair.
pub fn score_permutation(table: &PairwiseRelationTable, sigma: &Permutation) -> Result<f64, ReorderError> {
    if table.n != sigma.len() {
        return Err(ReorderError::SizeMismatch(table.n, sigma.len()));
    }
    Ok(score_unchecked(table, sigma.as_slice()))
}

fn score_unchecked(table: &PairwiseRelationTable, slots: &[usize]) -> f64 {
    let mut score = 0.0;
    for caption in 0..table.n {
        for (frame, &slot) in slots.iter().enumerate() {
            if let Some(lp) = table.log_prob(caption, frame, Relation::between(caption, slot)) {
                score += lp;
            }
        }
    }
    score
}

/// Exhaustive argmax over all `n!` orderings; ties keep the
/// lexicographically first mapping.
pub fn best_ordering(table: &PairwiseRelationTable) -> Result<(Permutation, f64), ReorderError> {
    let n = table.n;
    if n == 0 {
        return Err(ReorderError::Empty);
    }
    if n > MAX_EXHAUSTIVE {
        return Err(ReorderError::TooLarge(n));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for slots in (0..n).permutations(n) {
        let s = score_unchecked(table, &slots);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((slots, s));
        }
    }
    let (slots, score) = best.expect("n >= 1 has a permutation");
    Ok((Permutation(slots), score))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

/// Maximum-weight one-to-one matching of `min(n, m)` pairs.
///
/// Solves the square min-cost problem on negated weights (zero-padded) with
/// the O(k^3) potential-based Hungarian method, then picks, among all
/// optimal matchings, the one whose column sequence is lexicographically
/// smallest by walking the equality subgraph of the optimal duals.
pub fn hungarian_match(similarity: &[Vec<f64>]) -> Result<Assignment, ReorderError> {
    let n = similarity.len();
    let m = similarity.first().map_or(0, Vec::len);
    if similarity.iter().any(|r| r.len() != m) {
        return Err(ReorderError::Ragged);
    }
    for (i, row) in similarity.iter().enumerate() {
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(ReorderError::NonFinite(i, j));
        }
    }
    if n == 0 || m == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total: 0.0,
        });
    }
    let k = n.max(m);
    let cost = |i: usize, j: usize| if i < n && j < m { -similarity[i][j] } else { 0.0 };

    // 1-indexed potentials; column 0 is the virtual root.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut row_of = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let scale = similarity.iter().flatten().fold(1.0f64, |a, x| a.max(x.abs()));
    let eps = 1e-9 * scale;
    let tight: Vec<Vec<bool>> = (0..k)
        .map(|i| (0..k).map(|j| cost(i, j) - u[i + 1] - v[j + 1] <= eps).collect())
        .collect();
    let mut col_of = vec![0usize; k];
    let mut owner = vec![0usize; k];
    for j in 1..=k {
        col_of[row_of[j] - 1] = j - 1;
        owner[j - 1] = row_of[j] - 1;
    }
    lexicographic_refine(&tight, &mut col_of, &mut owner);

    let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, col_of[i])).filter(|&(_, j)| j < m).collect();
    let total = pairs.iter().map(|&(i, j)| similarity[i][j]).sum();
    Ok(Assignment { pairs, total })
}

/// Rewrites a perfect matching of the `tight` graph into the
/// lexicographically smallest one (rows in order, smallest column first).
fn lexicographic_refine(tight: &[Vec<bool>], col_of: &mut [usize], owner: &mut [usize]) {
    let k = tight.len();
    let mut fixed_col = vec![false; k];
    for i in 0..k {
        for j in 0..k {
            if fixed_col[j] || !tight[i][j] {
                continue;
            }
            if col_of[i] == j {
                fixed_col[j] = true;
                break;
            }
            // Moving i onto j frees col_of[i]; owner[j] must reach it through
            // an alternating path over unfixed rows and columns.
            let target = col_of[i];
            let start = owner[j];
            let mut visited = vec![false; k];
            visited[j] = true;
            let mut path = Vec::new();
            if alternating_path(tight, col_of, owner, &fixed_col, start, target, i, &mut visited, &mut path) {
                // path holds (row, new_col) moves
                for &(r, c) in path.iter().rev() {
                    col_of[r] = c;
                    owner[c] = r;
                }
                col_of[i] = j;
                owner[j] = i;
                fixed_col[j] = true;
                break;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn alternating_path(
    tight: &[Vec<bool>],
    col_of: &[usize],
    owner: &[usize],
    fixed_col: &[bool],
    row: usize,
    target: usize,
    excluded_row: usize,
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for c in 0..tight.len() {
        if visited[c] || fixed_col[c] || !tight[row][c] || c == col_of[row] {
            continue;
        }
        visited[c] = true;
        if c == target {
            path.push((row, c));
            return true;
        }
        let next = owner[c];
        if next == excluded_row {
            continue;
        }
        if alternating_path(tight, col_of, owner, fixed_col, next, target, excluded_row, visited, path) {
            path.push((row, c));
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Mean absolute displacement per element.
    #[default]
    MeanDisplacement,
    /// Spearman's footrule: the summed displacement.
    Footrule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoryMetrics {
    pub spearman: f64,
    pub pairwise_accuracy: f64,
    pub distance: f64,
}

pub fn story_metrics(predicted: &Permutation, truth: &Permutation, distance: DistanceKind) -> Result<StoryMetrics, ReorderError> {
    let n = predicted.len();
    if n != truth.len() {
        return Err(ReorderError::SizeMismatch(n, truth.len()));
    }
    if n == 0 {
        return Err(ReorderError::Empty);
    }
    let p = predicted.as_slice();
    let t = truth.as_slice();
    let spearman = if n == 1 {
        1.0
    } else {
        let d2: f64 = p.iter().zip(t).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
        let nf = n as f64;
        1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0))
    };
    let mut agree = 0usize;
    let mut pairs = 0usize;
    for a in 0..n {
        for b in a + 1..n {
            pairs += 1;
            if p[a].cmp(&p[b]) == t[a].cmp(&t[b]) {
                agree += 1;
            }
        }
    }
    let pairwise_accuracy = if pairs == 0 { 1.0 } else { agree as f64 / pairs as f64 };
    let displacement: f64 = p.iter().zip(t).map(|(&a, &b)| a.abs_diff(b) as f64).sum();
    let distance = match distance {
        DistanceKind::MeanDisplacement => displacement / n as f64,
        DistanceKind::Footrule => displacement,
    };
    Ok(StoryMetrics {
        spearman,
        pairwise_accuracy,
        distance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryEvalReport {
    pub spearman: f64,
    pub pairwise_accuracy: f64,
    pub distance: f64,
    pub n_stories: usize,
    /// Stories whose predicted ordering equals the truth exactly.
    pub exact: usize,
}

/// Best ordering per story, then metrics macro-averaged over stories.
pub fn evaluate_story_set(
    tables: &[PairwiseRelationTable],
    truths: &[Permutation],
    distance: DistanceKind,
) -> Result<StoryEvalReport, ReorderError> {
    if tables.len() != truths.len() {
        return Err(ReorderError::SizeMismatch(tables.len(), truths.len()));
    }
    if tables.is_empty() {
        return Err(ReorderError::Empty);
    }
    let per_story: Vec<Result<(StoryMetrics, bool), ReorderError>> = tables
        .par_iter()
        .zip(truths.par_iter())
        .enumerate()
        .map(|(index, (table, truth))| {
            let wrap = |e| ReorderError::Story {
                index,
                source: Box::new(e),
            };
            let (pred, _) = best_ordering(table).map_err(wrap)?;
            let m = story_metrics(&pred, truth, distance).map_err(wrap)?;
            Ok((m, pred == *truth))
        })
        .collect();
    let mut sum = (0.0, 0.0, 0.0);
    let mut exact = 0;
    for r in per_story {
        let (m, hit) = r?;
        sum.0 += m.spearman;
        sum.1 += m.pairwise_accuracy;
        sum.2 += m.distance;
        exact += usize::from(hit);
    }
    let k = tables.len() as f64;
    Ok(StoryEvalReport {
        spearman: sum.0 / k,
        pairwise_accuracy: sum.1 / k,
        distance: sum.2 / k,
        n_stories: tables.len(),
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_scores_tie() {
        let t = PairwiseRelationTable::uniform(3);
        let expected = 9.0 * 0.25f64.ln();
        for p in (0..3).permutations(3) {
            let s = score_permutation(&t, &perm(&p)).unwrap();
            assert!((s - expected).abs() < 1e-12);
        }
        let (best, _) = best_ordering(&t).unwrap();
        assert_eq!(best, Permutation::identity(3));
    }

    #[test]
    fn single_element_score() {
        let mut t = PairwiseRelationTable::uniform(1);
        t.log_probs = vec![0.7f64.ln(), 0.1f64.ln(), 0.1f64.ln(), 0.1f64.ln()];
        t.check().unwrap();
        let s = score_permutation(&t, &Permutation::identity(1)).unwrap();
        assert!((s - 0.7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn too_large_and_mismatch() {
        assert_eq!(best_ordering(&PairwiseRelationTable::uniform(9)), Err(ReorderError::TooLarge(9)));
        assert_eq!(
            score_permutation(&PairwiseRelationTable::uniform(3), &Permutation::identity(2)),
            Err(ReorderError::SizeMismatch(3, 2))
        );
    }

    #[test]
    fn table_validation() {
        assert!(matches!(
            PairwiseRelationTable::new(2, 4, vec![0.25f64.ln(); 15]),
            Err(ReorderError::TableSize { .. })
        ));
        assert!(matches!(
            PairwiseRelationTable::new(1, 4, vec![0.5f64.ln(); 4]),
            Err(ReorderError::NotNormalized { .. })
        ));
        assert!(matches!(PairwiseRelationTable::new(1, 3, vec![0.0; 3]), Err(ReorderError::Classes(3))));
        assert!(PairwiseRelationTable::parse_line(r#"{"n":1,"log_probs":[0.0,"x"]}"#).is_err());
    }

    #[test]
    fn two_way_marginal() {
        let truth = perm(&[2, 0, 1]);
        let t = PairwiseRelationTable::from_truth(&truth, 0.97);
        let two = t.to_two_way();
        two.check().unwrap();
        assert_eq!(best_ordering(&two).unwrap().0, truth);
    }

    #[test]
    fn hungarian_examples() {
        let eye = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let a = hungarian_match(&eye).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(a.total, 3.0);
        let anti = hungarian_match(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(anti.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(anti.total, 2.0);
    }

    #[test]
    fn hungarian_ties_are_lexicographic() {
        let zeros = vec![vec![0.0; 4]; 4];
        assert_eq!(hungarian_match(&zeros).unwrap().pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        let sim = vec![vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 5.0]];
        assert_eq!(hungarian_match(&sim).unwrap().pairs, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn hungarian_rectangular() {
        let wide = vec![vec![1.0, 5.0, 2.0], vec![4.0, 6.0, 0.0]];
        let a = hungarian_match(&wide).unwrap();
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total, 9.0);
        let tall = vec![vec![1.0], vec![3.0], vec![2.0]];
        let a = hungarian_match(&tall).unwrap();
        assert_eq!(a.pairs, vec![(1, 0)]);
    }

    #[test]
    fn hungarian_rejects_bad_input() {
        assert_eq!(hungarian_match(&[vec![1.0, f64::NAN]]), Err(ReorderError::NonFinite(0, 1)));
        assert_eq!(hungarian_match(&[vec![1.0, 2.0], vec![1.0]]), Err(ReorderError::Ragged));
        assert!(hungarian_match(&[]).unwrap().pairs.is_empty());
    }

    #[test]
    fn metric_examples() {
        let id = Permutation::identity(5);
        let m = story_metrics(&id, &id, DistanceKind::MeanDisplacement).unwrap();
        assert_eq!((m.spearman, m.pairwise_accuracy, m.distance), (1.0, 1.0, 0.0));

        let rev = perm(&[4, 3, 2, 1, 0]);
        let m = story_metrics(&rev, &id, DistanceKind::MeanDisplacement).unwrap();
        assert!((m.spearman + 1.0).abs() < 1e-15);
        assert_eq!(m.pairwise_accuracy, 0.0);
        assert!((m.distance - 2.4).abs() < 1e-15);
        assert_eq!(story_metrics(&rev, &id, DistanceKind::Footrule).unwrap().distance, 12.0);

        let swap = perm(&[1, 0, 2, 3, 4]);
        let m = story_metrics(&swap, &id, DistanceKind::MeanDisplacement).unwrap();
        assert!((m.pairwise_accuracy - 0.9).abs() < 1e-15);
        assert!((m.distance - 0.4).abs() < 1e-15);

        assert_eq!(
            story_metrics(&id, &Permutation::identity(4), DistanceKind::MeanDisplacement),
            Err(ReorderError::SizeMismatch(5, 4))
        );
    }

    #[test]
    fn eval_examples() {
        let truths = vec![perm(&[1, 0, 2, 4, 3]), perm(&[4, 3, 2, 1, 0])];
        let tables: Vec<_> = truths.iter().map(|t| PairwiseRelationTable::from_truth(t, 0.97)).collect();
        let r = evaluate_story_set(&tables, &truths, DistanceKind::MeanDisplacement).unwrap();
        assert_eq!((r.spearman, r.pairwise_accuracy, r.distance, r.n_stories), (1.0, 1.0, 0.0, 2));
        assert_eq!(evaluate_story_set(&[], &[], DistanceKind::MeanDisplacement), Err(ReorderError::Empty));
        let bad = vec![PairwiseRelationTable::uniform(9)];
        assert!(matches!(
            evaluate_story_set(&bad, &[Permutation::identity(9)], DistanceKind::MeanDisplacement),
            Err(ReorderError::Story { index: 0, .. })
        ));
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![1, 2]).is_err());
        let p: Permutation = serde_json::from_str("[2,0,1]").unwrap();
        assert_eq!(p.slot(0), 2);
        assert!(serde_json::from_str::<Permutation>("[0,0]").is_err());
    }
}
