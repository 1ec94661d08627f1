//! Loss kernels for the three pretraining objectives, in f64, with analytic
//! gradients where a finite-difference check is meaningful.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("row {row} has norm {norm}, expected unit length")]
    NotNormalized { row: usize, norm: f64 },
    #[error("row {0} has zero norm")]
    ZeroNorm(usize),
    #[error("temperature must be positive and finite, got {0} (logits are divided by it)")]
    Temperature(f64),
    #[error("every label is the ignore sentinel")]
    AllIgnored,
    #[error("label {label} at position {position} is out of range for {classes} classes")]
    LabelRange {
        position: usize,
        label: usize,
        classes: usize,
    },
    #[error("empty batch")]
    Empty,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if rows == 0 || cols == 0 {
            return Err(LossError::Shape(format!("{rows}x{cols} has an empty dimension")));
        }
        if data.len() != rows * cols {
            return Err(LossError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(LossError::NonFinite("matrix entry"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LossError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LossError::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `-log softmax(logits)[target]`, accurate when the target dominates.
fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let t = logits[target];
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == t {
        let rest: f64 = logits
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != target)
            .map(|(_, &x)| (x - t).exp())
            .sum();
        rest.ln_1p()
    } else {
        m - t + logits.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LossReport {
    pub value: f64,
    /// One gradient per differentiable input, in argument order; empty when
    /// gradients were not requested.
    pub gradients: Vec<EmbeddingMatrix>,
}

pub fn l2_normalize(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix, LossError> {
    let mut out = m.clone();
    for i in 0..m.rows {
        let norm = m.row_norm(i);
        if norm == 0.0 {
            return Err(LossError::ZeroNorm(i));
        }
        out.row_mut(i).iter_mut().for_each(|x| *x /= norm);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveDirection {
    /// Mean of frame->caption and caption->frame cross-entropies.
    Symmetric,
    /// Frame->caption only.
    RowOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub tau: f64,
    pub direction: ContrastiveDirection,
    /// Maximum allowed `|norm - 1|` per row; `None` skips the check.
    pub norm_tolerance: Option<f64>,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            direction: ContrastiveDirection::Symmetric,
            norm_tolerance: Some(1e-6),
        }
    }
}

/// In-batch contrastive matching loss over unit-normalized frame and
/// caption embeddings. Row `i` of each matrix is a matched pair; every other
/// row of the batch is a negative.
pub fn contrastive_loss(
    frames: &EmbeddingMatrix,
    captions: &EmbeddingMatrix,
    cfg: &ContrastiveConfig,
    want_grads: bool,
) -> Result<LossReport, LossError> {
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(LossError::Temperature(cfg.tau));
    }
    if frames.rows != captions.rows || frames.cols != captions.cols {
        return Err(LossError::Shape(format!(
            "frames {}x{} vs captions {}x{}",
            frames.rows, frames.cols, captions.rows, captions.cols
        )));
    }
    if let Some(tol) = cfg.norm_tolerance {
        for m in [frames, captions] {
            for row in 0..m.rows {
                let norm = m.row_norm(row);
                if (norm - 1.0).abs() > tol {
                    return Err(LossError::NotNormalized { row, norm });
                }
            }
        }
    }
    let b = frames.rows;
    let mut logits = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            logits[i * b + j] = dot(frames.row(i), captions.row(j)) / cfg.tau;
        }
    }
    let row_lse: Vec<f64> = (0..b).map(|i| logsumexp(logits[i * b..(i + 1) * b].iter().copied())).collect();
    let col_lse: Vec<f64> = (0..b).map(|j| logsumexp((0..b).map(|i| logits[i * b + j]))).collect();
    let row_ce = (0..b).map(|i| cross_entropy(&logits[i * b..(i + 1) * b], i)).sum::<f64>() / b as f64;
    let col_ce = (0..b)
        .map(|j| {
            let column: Vec<f64> = (0..b).map(|i| logits[i * b + j]).collect();
            cross_entropy(&column, j)
        })
        .sum::<f64>()
        / b as f64;
    let (value, row_w, col_w) = match cfg.direction {
        ContrastiveDirection::Symmetric => (0.5 * (row_ce + col_ce), 0.5, 0.5),
        ContrastiveDirection::RowOnly => (row_ce, 1.0, 0.0),
    };
    let mut report = LossReport {
        value: value.max(0.0),
        gradients: Vec::new(),
    };
    if !want_grads {
        return Ok(report);
    }

    // dL/dlogits, then chain through logits = F C^T / tau
    let mut g = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            let s = logits[i * b + j];
            let target = if i == j { 1.0 } else { 0.0 };
            g[i * b + j] = (row_w * ((s - row_lse[i]).exp() - target) + col_w * ((s - col_lse[j]).exp() - target))
                / b as f64;
        }
    }
    let d = frames.cols;
    let mut gf = EmbeddingMatrix::zeros(b, d);
    let mut gc = EmbeddingMatrix::zeros(b, d);
    for i in 0..b {
        for j in 0..b {
            let w = g[i * b + j] / cfg.tau;
            if w == 0.0 {
                continue;
            }
            for k in 0..d {
                gf.data[i * d + k] += w * captions.get(j, k);
                gc.data[j * d + k] += w * frames.get(i, k);
            }
        }
    }
    report.gradients = vec![gf, gc];
    Ok(report)
}

/// Normalizes raw projections, then applies [`contrastive_loss`]; gradients
/// are with respect to the raw, unnormalized rows.
pub fn contrastive_loss_from_projections(
    frames: &EmbeddingMatrix,
    captions: &EmbeddingMatrix,
    cfg: &ContrastiveConfig,
    want_grads: bool,
) -> Result<LossReport, LossError> {
    let nf = l2_normalize(frames)?;
    let nc = l2_normalize(captions)?;
    let inner = ContrastiveConfig {
        norm_tolerance: None,
        ..*cfg
    };
    let mut report = contrastive_loss(&nf, &nc, &inner, want_grads)?;
    if want_grads {
        for (grad, (raw, unit)) in report.gradients.iter_mut().zip([(frames, &nf), (captions, &nc)]) {
            for i in 0..raw.rows {
                let norm = raw.row_norm(i);
                let u = unit.row(i);
                let gu = grad.row(i).to_vec();
                let proj = dot(&gu, u);
                for (k, g) in grad.row_mut(i).iter_mut().enumerate() {
                    *g = (gu[k] - proj * u[k]) / norm;
                }
            }
        }
    }
    Ok(report)
}

/// Mean cross-entropy over labeled rows; `None` labels are ignored.
/// Gradient, when requested, is with respect to the logits.
pub fn masked_lm_loss(logits: &EmbeddingMatrix, labels: &[Option<usize>], want_grads: bool) -> Result<LossReport, LossError> {
    if labels.len() != logits.rows {
        return Err(LossError::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows
        )));
    }
    cross_entropy_rows(logits, labels, want_grads)
}

fn cross_entropy_rows(logits: &EmbeddingMatrix, labels: &[Option<usize>], want_grads: bool) -> Result<LossReport, LossError> {
    let classes = logits.cols;
    for (position, label) in labels.iter().enumerate() {
        if let Some(label) = *label {
            if label >= classes {
                return Err(LossError::LabelRange {
                    position,
                    label,
                    classes,
                });
            }
        }
    }
    let counted = labels.iter().filter(|l| l.is_some()).count();
    if counted == 0 {
        return Err(LossError::AllIgnored);
    }
    let mut total = 0.0;
    let mut grad = want_grads.then(|| EmbeddingMatrix::zeros(logits.rows, classes));
    for (i, label) in labels.iter().enumerate() {
        let Some(label) = *label else { continue };
        let row = logits.row(i);
        let lse = logsumexp(row.iter().copied());
        total += cross_entropy(row, label);
        if let Some(g) = grad.as_mut() {
            for (k, gk) in g.row_mut(i).iter_mut().enumerate() {
                let target = if k == label { 1.0 } else { 0.0 };
                *gk = ((row[k] - lse).exp() - target) / counted as f64;
            }
        }
    }
    Ok(LossReport {
        value: (total / counted as f64).max(0.0),
        gradients: grad.into_iter().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Exact GELU, `x * Phi(x)`.
    #[default]
    Gelu,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Gelu => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
            Self::Relu => x.max(0.0),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + x * pdf
            }
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Two-layer perceptron from a concatenated pair `[h_i; h_j]` to relation
/// logits: `W2 act(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderHeadParams {
    /// hidden x (2 * dim)
    pub w1: EmbeddingMatrix,
    pub b1: Vec<f64>,
    /// classes x hidden
    pub w2: EmbeddingMatrix,
    pub b2: Vec<f64>,
    #[serde(default)]
    pub activation: Activation,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct OrderForward {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderHeadGrads {
    pub w1: EmbeddingMatrix,
    pub b1: Vec<f64>,
    pub w2: EmbeddingMatrix,
    pub b2: Vec<f64>,
    pub h_i: Vec<f64>,
    pub h_j: Vec<f64>,
}

impl OrderHeadParams {
    pub fn check(&self, dim: usize) -> Result<(), LossError> {
        let hidden = self.w1.rows;
        if self.w1.cols != 2 * dim {
            return Err(LossError::Shape(format!(
                "w1 has {} columns, expected 2 * {dim}",
                self.w1.cols
            )));
        }
        if self.b1.len() != hidden || self.w2.cols != hidden || self.b2.len() != self.w2.rows {
            return Err(LossError::Shape(format!(
                "head chain broken: w1 {}x{}, b1 {}, w2 {}x{}, b2 {}",
                self.w1.rows,
                self.w1.cols,
                self.b1.len(),
                self.w2.rows,
                self.w2.cols,
                self.b2.len()
            )));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.w2.rows
    }

    pub fn zeros(dim: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: EmbeddingMatrix::zeros(hidden, 2 * dim),
            b1: vec![0.0; hidden],
            w2: EmbeddingMatrix::zeros(classes, hidden),
            b2: vec![0.0; classes],
            activation: Activation::Gelu,
        }
    }

    pub fn forward(&self, h_i: &[f64], h_j: &[f64]) -> Result<OrderForward, LossError> {
        if h_i.len() != h_j.len() {
            return Err(LossError::Shape(format!("h_i has {} dims, h_j {}", h_i.len(), h_j.len())));
        }
        self.check(h_i.len())?;
        let input = [h_i, h_j].concat();
        let pre: Vec<f64> = (0..self.w1.rows).map(|r| dot(self.w1.row(r), &input) + self.b1[r]).collect();
        let hidden: Vec<f64> = pre.iter().map(|&x| self.activation.apply(x)).collect();
        let logits = (0..self.w2.rows).map(|r| dot(self.w2.row(r), &hidden) + self.b2[r]).collect();
        Ok(OrderForward {
            input,
            pre,
            hidden,
            logits,
        })
    }

    /// Back-propagates `d_logits` through the head.
    pub fn backward(&self, fwd: &OrderForward, d_logits: &[f64]) -> OrderHeadGrads {
        let (hidden, classes, width) = (self.w1.rows, self.w2.rows, self.w1.cols);
        let mut w2 = EmbeddingMatrix::zeros(classes, hidden);
        let mut d_hidden = vec![0.0; hidden];
        for c in 0..classes {
            for h in 0..hidden {
                w2.data[c * hidden + h] = d_logits[c] * fwd.hidden[h];
                d_hidden[h] += d_logits[c] * self.w2.get(c, h);
            }
        }
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&fwd.pre)
            .map(|(g, &x)| g * self.activation.derivative(x))
            .collect();
        let mut w1 = EmbeddingMatrix::zeros(hidden, width);
        let mut d_input = vec![0.0; width];
        for h in 0..hidden {
            for k in 0..width {
                w1.data[h * width + k] = d_pre[h] * fwd.input[k];
                d_input[k] += d_pre[h] * self.w1.get(h, k);
            }
        }
        let h_j = d_input.split_off(width / 2);
        OrderHeadGrads {
            w1,
            b1: d_pre,
            w2,
            b2: d_logits.to_vec(),
            h_i: d_input,
            h_j,
        }
    }
}

pub fn order_logits(h_i: &[f64], h_j: &[f64], params: &OrderHeadParams) -> Result<Vec<f64>, LossError> {
    Ok(params.forward(h_i, h_j)?.logits)
}

/// Mean cross-entropy over pairs. The gradient, when requested, is with
/// respect to the stacked logits (pairs x classes).
pub fn ordering_loss(logits: &[Vec<f64>], true_classes: &[usize], want_grads: bool) -> Result<LossReport, LossError> {
    if logits.is_empty() {
        return Err(LossError::Empty);
    }
    if logits.len() != true_classes.len() {
        return Err(LossError::Shape(format!(
            "{} logit vectors for {} labels",
            logits.len(),
            true_classes.len()
        )));
    }
    let m = EmbeddingMatrix::from_rows(logits)?;
    let labels: Vec<Option<usize>> = true_classes.iter().map(|&c| Some(c)).collect();
    cross_entropy_rows(&m, &labels, want_grads)
}

pub const DEFAULT_CONTRASTIVE_COEFF: f64 = 0.25;

pub fn combine_losses(mask_lm: f64, contrastive: f64, ordering: f64, contrastive_coeff: f64) -> Result<f64, LossError> {
    for (name, v) in [
        ("mask_lm", mask_lm),
        ("contrastive", contrastive),
        ("ordering", ordering),
        ("contrastive_coeff", contrastive_coeff),
    ] {
        if !v.is_finite() {
            return Err(LossError::NonFinite(name));
        }
    }
    Ok(mask_lm + contrastive_coeff * contrastive + ordering)
}

/// Scrambling schedule used while training the ordering head: with
/// probability `prob`, pick `k` uniformly in `2..=n` and return `k` distinct
/// frame positions (ascending) whose position embeddings get replaced.
pub fn sample_scramble<R: Rng>(n: usize, prob: f64, rng: &mut R) -> Vec<usize> {
    if n < 2 || !rng.gen_bool(prob.clamp(0.0, 1.0)) {
        return Vec::new();
    }
    let k = rng.gen_range(2..=n);
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(rng);
    positions.truncate(k);
    positions.sort_unstable();
    positions
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let n = l2_normalize(&m(&[&[3.0, 4.0]])).unwrap();
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15 && (n.get(0, 1) - 0.8).abs() < 1e-15);
        let unit = m(&[&[1.0, 0.0]]);
        assert_eq!(l2_normalize(&unit).unwrap(), unit);
        assert_eq!(l2_normalize(&m(&[&[1.0, 0.0], &[0.0, 0.0]])), Err(LossError::ZeroNorm(1)));
    }

    #[test]
    fn single_pair_loss_is_zero() {
        let a = m(&[&[0.6, 0.8]]);
        let r = contrastive_loss(&a, &a, &ContrastiveConfig::default(), true).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn identity_pair_closed_form() {
        let a = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = contrastive_loss(&a, &a, &ContrastiveConfig::default(), false).unwrap();
        let expected = (-20f64).exp().ln_1p();
        assert!((r.value - expected).abs() < 1e-20, "{} vs {}", r.value, expected);
        assert!((r.value - 2.061e-9).abs() < 1e-12);
    }

    #[test]
    fn contrastive_errors() {
        let a = m(&[&[1.0, 0.0]]);
        let b = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            contrastive_loss(&a, &b, &ContrastiveConfig::default(), false),
            Err(LossError::Shape(_))
        ));
        let c = m(&[&[2.0, 0.0]]);
        assert!(matches!(
            contrastive_loss(&c, &a, &ContrastiveConfig::default(), false),
            Err(LossError::NotNormalized { row: 0, .. })
        ));
        let cfg = ContrastiveConfig {
            tau: 0.0,
            ..Default::default()
        };
        assert_eq!(contrastive_loss(&a, &a, &cfg, false), Err(LossError::Temperature(0.0)));
    }

    #[test]
    fn mlm_examples() {
        let uniform = EmbeddingMatrix::zeros(2, 4);
        let r = masked_lm_loss(&uniform, &[None, Some(2)], false).unwrap();
        assert!((r.value - 4f64.ln()).abs() < 1e-15);

        let sat = m(&[&[1000.0, 0.0, 0.0]]);
        assert!(masked_lm_loss(&sat, &[Some(0)], false).unwrap().value < 1e-6);

        assert_eq!(masked_lm_loss(&uniform, &[None, None], false), Err(LossError::AllIgnored));
        assert!(matches!(
            masked_lm_loss(&uniform, &[Some(4), None], false),
            Err(LossError::LabelRange { label: 4, .. })
        ));
    }

    #[test]
    fn order_head_examples() {
        let p = OrderHeadParams::zeros(3, 5, 4);
        assert_eq!(order_logits(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &p).unwrap(), vec![0.0; 4]);

        let mut p = OrderHeadParams::zeros(2, 4, 2);
        for k in 0..4 {
            p.w1.data_mut()[k * 4 + k] = 1.0;
        }
        p.b2 = vec![0.3, -0.7];
        assert_eq!(order_logits(&[1.0, 2.0], &[3.0, 4.0], &p).unwrap(), vec![0.3, -0.7]);

        assert!(matches!(order_logits(&[1.0], &[1.0], &p), Err(LossError::Shape(_))));
    }

    #[test]
    fn ordering_examples() {
        let r = ordering_loss(&[vec![0.0, 0.0]], &[0], false).unwrap();
        assert!((r.value - 2f64.ln()).abs() < 1e-15);
        assert_eq!(ordering_loss(&[], &[], false), Err(LossError::Empty));
        assert!(matches!(
            ordering_loss(&[vec![0.0, 0.0]], &[2], false),
            Err(LossError::LabelRange { .. })
        ));
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_losses(1.0, 4.0, 0.0, 0.25), Ok(2.0));
        assert_eq!(combine_losses(0.0, 0.0, 0.0, 0.25), Ok(0.0));
        assert_eq!(combine_losses(2.0, 0.0, 3.0, 0.25), Ok(5.0));
        assert_eq!(combine_losses(f64::NAN, 0.0, 0.0, 0.25), Err(LossError::NonFinite("mask_lm")));
    }

    #[test]
    fn scramble_sampler_bounds() {
        let mut rng = crate::seed::seeded_rng(5);
        let mut fired = 0;
        for _ in 0..2000 {
            let s = sample_scramble(4, 0.4, &mut rng);
            if !s.is_empty() {
                fired += 1;
                assert!((2..=4).contains(&s.len()));
                assert!(s.windows(2).all(|w| w[0] < w[1]));
            }
        }
        assert!((700..=900).contains(&fired), "{fired}");
    }
}
