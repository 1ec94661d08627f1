//! Built-in invariant checks runnable from a release binary.
//!
//! The brute-force references here are deliberately naive: exhaustive
//! enumeration of paths and permutations.

use itertools::Itertools;
use rand::Rng;
use serde::Serialize;

use crate::align::{dtw_align, levenshtein};
use crate::objectives::{contrastive_loss, l2_normalize, ContrastiveConfig, EmbeddingMatrix};
use crate::reorder::hungarian_match;
use crate::seed::seeded_rng;
use crate::segment::{sequence_shape, SequenceShape, ShapeConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckConfig {
    pub shape: ShapeConfig,
    pub tau: f64,
    pub seed: u64,
}

impl Default for SelfCheckConfig {
    fn default() -> Self {
        Self {
            shape: ShapeConfig::default(),
            tau: 0.05,
            seed: 0,
        }
    }
}

pub const EXPECTED_SHAPE: SequenceShape = SequenceShape {
    cells_per_frame: 66,
    visual_tokens_per_frame: 67,
    joint_sequence_length: 396,
    language_only_length: 512,
};

pub fn run(cfg: &SelfCheckConfig) -> Vec<CheckResult> {
    vec![
        check_shape(&cfg.shape),
        check_contrastive(cfg.tau, cfg.seed),
        check_hungarian(cfg.seed),
        check_dtw(cfg.seed),
    ]
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn result(name: &'static str, outcome: Result<String, String>) -> CheckResult {
    match outcome {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

fn check_shape(shape: &ShapeConfig) -> CheckResult {
    let outcome = match sequence_shape(shape) {
        Err(e) => Err(e.to_string()),
        Ok(s) if s == EXPECTED_SHAPE => Ok(format!(
            "cells {} / visual {} / joint {} / language {}",
            s.cells_per_frame, s.visual_tokens_per_frame, s.joint_sequence_length, s.language_only_length
        )),
        Ok(s) => Err(format!("got {s:?}, expected {EXPECTED_SHAPE:?}")),
    };
    result("shape_arithmetic", outcome)
}

fn random_unit(rng: &mut impl Rng, rows: usize, cols: usize) -> EmbeddingMatrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    l2_normalize(&EmbeddingMatrix::new(rows, cols, data).expect("shape")).expect("non-zero rows")
}

/// Worst relative error of analytic vs central-difference gradients.
fn contrastive_gradient_error(f: &EmbeddingMatrix, c: &EmbeddingMatrix, cfg: &ContrastiveConfig) -> Result<f64, String> {
    let analytic = contrastive_loss(f, c, cfg, true).map_err(|e| e.to_string())?.gradients;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (which, grad) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.data().len()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let eval = |delta: f64| {
                let (mut f2, mut c2) = (f.clone(), c.clone());
                let target = if which == 0 { &mut f2 } else { &mut c2 };
                target.data_mut()[k] += delta;
                contrastive_loss(&f2, &c2, cfg, false).map(|r| r.value)
            };
            *slot = (eval(h).map_err(|e| e.to_string())? - eval(-h).map_err(|e| e.to_string())?) / (2.0 * h);
        }
        let diff: f64 = grad.data().iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = grad
            .data()
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|x| x * x).sum::<f64>().sqrt());
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
    }
    Ok(worst)
}

fn check_contrastive(tau: f64, seed: u64) -> CheckResult {
    let cfg = ContrastiveConfig {
        tau,
        norm_tolerance: None,
        ..Default::default()
    };
    let mut rng = seeded_rng(seed ^ 0xC0FFEE);
    let outcome = (|| {
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let b = rng.gen_range(2..=8);
            let d = rng.gen_range(2..=16);
            let f = random_unit(&mut rng, b, d);
            let c = random_unit(&mut rng, b, d);
            worst = worst.max(contrastive_gradient_error(&f, &c, &cfg)?);
        }
        if worst <= 1e-4 {
            Ok(format!("max relative gradient error {worst:.2e}"))
        } else {
            Err(format!("relative gradient error {worst:.2e} exceeds 1e-4"))
        }
    })();
    result("contrastive_gradient", outcome)
}

fn brute_force_assignment(sim: &[Vec<f64>]) -> f64 {
    let n = sim.len();
    let m = sim[0].len();
    if n <= m {
        (0..m)
            .permutations(n)
            .map(|cols| cols.iter().enumerate().map(|(i, &j)| sim[i][j]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        (0..n)
            .permutations(m)
            .map(|rows| rows.iter().enumerate().map(|(j, &i)| sim[i][j]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_hungarian(seed: u64) -> CheckResult {
    let mut rng = seeded_rng(seed ^ 0x4855);
    let mut mismatches = 0;
    let trials = 200;
    for _ in 0..trials {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=5);
        let sim: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let got = hungarian_match(&sim).map(|a| a.total).unwrap_or(f64::NAN);
        if (got - brute_force_assignment(&sim)).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    let outcome = if mismatches == 0 {
        Ok(format!("{trials} random matrices match brute force"))
    } else {
        Err(format!("{mismatches}/{trials} mismatches against brute force"))
    };
    result("hungarian_vs_brute_force", outcome)
}

fn brute_force_dtw(a: &[String], b: &[String], i: usize, j: usize) -> u64 {
    // cheapest path from (0,0) ending at (i,j)
    if i == 0 && j == 0 {
        return levenshtein(&a[0], &b[0]) as u64;
    }
    let mut best = u64::MAX;
    if i > 0 && j > 0 {
        best = best.min(brute_force_dtw(a, b, i - 1, j - 1) + levenshtein(&a[i], &b[j]) as u64);
    }
    if j > 0 {
        best = best.min(brute_force_dtw(a, b, i, j - 1) + b[j].chars().count() as u64);
    }
    if i > 0 {
        best = best.min(brute_force_dtw(a, b, i - 1, j) + a[i].chars().count() as u64);
    }
    best
}

fn random_words(rng: &mut impl Rng, max_len: usize) -> Vec<String> {
    let n = rng.gen_range(1..=max_len);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=4);
            (0..len).map(|_| char::from(b'a' + rng.gen_range(0..4))).collect()
        })
        .collect()
}

fn check_dtw(seed: u64) -> CheckResult {
    let mut rng = seeded_rng(seed ^ 0xD7);
    let trials = 100;
    let mut mismatches = 0;
    for _ in 0..trials {
        let a = random_words(&mut rng, 6);
        let b = random_words(&mut rng, 6);
        let got = dtw_align(&a, &b).map(|al| al.total_cost).unwrap_or(u64::MAX);
        if got != brute_force_dtw(&a, &b, a.len() - 1, b.len() - 1) {
            mismatches += 1;
        }
    }
    let outcome = if mismatches == 0 {
        Ok(format!("{trials} random word-sequence pairs match exhaustive search"))
    } else {
        Err(format!("{mismatches}/{trials} mismatches against exhaustive search"))
    };
    result("dtw_vs_brute_force", outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes() {
        let results = run(&SelfCheckConfig::default());
        assert!(all_passed(&results), "{results:#?}");
        assert_eq!(results.len(), 4);
    }

    #[test]
    fn zero_temperature_fails_contrastive_check() {
        let results = run(&SelfCheckConfig {
            tau: 0.0,
            ..Default::default()
        });
        let c = results.iter().find(|r| r.name == "contrastive_gradient").unwrap();
        assert!(!c.passed);
        assert!(c.detail.contains("divided"), "{}", c.detail);
        assert!(results.iter().filter(|r| r.name != "contrastive_gradient").all(|r| r.passed));
    }

    #[test]
    fn bad_patch_fails_shape_check() {
        let results = run(&SelfCheckConfig {
            shape: ShapeConfig {
                patch: 17,
                ..Default::default()
            },
            ..Default::default()
        });
        let s = &results[0];
        assert!(!s.passed);
        assert!(s.detail.contains("divisible"), "{}", s.detail);
    }
}
