//! Reference implementations used only by the integration tests. They are
//! written for obviousness, not speed.

#![allow(dead_code)]

use itertools::Itertools;
use rand::Rng;
use vidscript::objectives::EmbeddingMatrix;

/// Classic two-row edit distance over chars.
pub fn edit_distance(a: &str, b: &str) -> u64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut table = vec![vec![0u64; b.len() + 1]; a.len() + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i as u64;
    }
    for j in 0..=b.len() {
        table[0][j] = j as u64;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = table[i - 1][j - 1] + u64::from(a[i - 1] != b[j - 1]);
            table[i][j] = sub.min(table[i - 1][j] + 1).min(table[i][j - 1] + 1);
        }
    }
    table[a.len()][b.len()]
}

/// Cost of an explicit warping path under the alignment cost model.
pub fn path_cost(noisy: &[String], clean: &[String], path: &[(usize, usize)]) -> u64 {
    let mut total = edit_distance(&noisy[path[0].0], &clean[path[0].1]);
    for w in path.windows(2) {
        let ((i0, j0), (i1, j1)) = (w[0], w[1]);
        total += match (i1 - i0, j1 - j0) {
            (1, 1) => edit_distance(&noisy[i1], &clean[j1]),
            (0, 1) => clean[j1].chars().count() as u64,
            (1, 0) => noisy[i1].chars().count() as u64,
            step => panic!("illegal step {step:?}"),
        };
    }
    total
}

/// Enumerates every monotone path and returns the smallest cost.
pub fn exhaustive_dtw(noisy: &[String], clean: &[String]) -> u64 {
    let sub: Vec<Vec<u64>> = noisy.iter().map(|a| clean.iter().map(|b| edit_distance(a, b)).collect()).collect();
    let (n, m) = (noisy.len(), clean.len());
    let mut best = u64::MAX;
    // depth-first over (i, j, cost so far)
    let mut stack = vec![(0usize, 0usize, sub[0][0])];
    while let Some((i, j, cost)) = stack.pop() {
        if i + 1 == n && j + 1 == m {
            best = best.min(cost);
            continue;
        }
        if i + 1 < n && j + 1 < m {
            stack.push((i + 1, j + 1, cost + sub[i + 1][j + 1]));
        }
        if j + 1 < m {
            stack.push((i, j + 1, cost + clean[j + 1].chars().count() as u64));
        }
        if i + 1 < n {
            stack.push((i + 1, j, cost + noisy[i + 1].chars().count() as u64));
        }
    }
    best
}

pub fn random_word(rng: &mut impl Rng, alphabet: &[char], max_len: usize) -> String {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

pub fn random_words(rng: &mut impl Rng, max_words: usize) -> Vec<String> {
    let n = rng.gen_range(1..=max_words);
    (0..n).map(|_| random_word(rng, &['a', 'b', 'c', 'é'], 4)).collect()
}

/// Best assignment by enumerating every permutation of the zero-padded
/// square matrix. Returns the total and the padded column vector of the
/// lexicographically first permutation attaining it (exact comparisons).
pub fn brute_force_assignment(sim: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = sim.len();
    let m = sim[0].len();
    let k = n.max(m);
    let weight = |i: usize, j: usize| if i < n && j < m { sim[i][j] } else { 0.0 };
    let mut best = f64::NEG_INFINITY;
    let mut arg = Vec::new();
    for cols in (0..k).permutations(k) {
        let total: f64 = cols.iter().enumerate().map(|(i, &j)| weight(i, j)).sum();
        if total > best {
            best = total;
            arg = cols;
        }
    }
    (best, arg)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> EmbeddingMatrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    EmbeddingMatrix::new(rows, cols, data).unwrap()
}

pub fn unit_rows(m: &EmbeddingMatrix) -> EmbeddingMatrix {
    let rows: Vec<Vec<f64>> = m
        .to_rows()
        .into_iter()
        .map(|r| {
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            r.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    EmbeddingMatrix::from_rows(&rows).unwrap()
}

/// `-log(exp(x[t]) / sum exp(x))`, evaluated directly from the definition.
pub fn naive_nll(row: &[f64], target: usize) -> f64 {
    let z: f64 = row.iter().map(|x| x.exp()).sum();
    -(row[target].exp() / z).ln()
}

/// Contrastive loss written straight from its definition.
pub fn naive_contrastive(f: &EmbeddingMatrix, c: &EmbeddingMatrix, tau: f64) -> f64 {
    let b = f.rows();
    let s: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            (0..b)
                .map(|j| f.row(i).iter().zip(c.row(j)).map(|(x, y)| x * y).sum::<f64>() / tau)
                .collect()
        })
        .collect();
    let rows: f64 = (0..b).map(|i| naive_nll(&s[i], i)).sum::<f64>() / b as f64;
    let cols: f64 = (0..b)
        .map(|j| naive_nll(&(0..b).map(|i| s[i][j]).collect::<Vec<_>>(), j))
        .sum::<f64>()
        / b as f64;
    0.5 * (rows + cols)
}

/// Central differences of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
