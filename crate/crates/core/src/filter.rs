//! Video retention gates over metadata and thumbnail classifier outputs.
//!
//! Gates run in a fixed order (English ASR, duration, category, object
//! count, visual variance) and the first failing gate names the reason.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const THUMBNAILS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("{matrix} has {rows} rows, expected {THUMBNAILS}")]
    RowCount { matrix: &'static str, rows: usize },
    #[error("{matrix} rows have unequal lengths")]
    Ragged { matrix: &'static str },
    #[error("object probability {value} at ({row}, {col}) is outside [0, 1]")]
    Probability { row: usize, col: usize, value: f64 },
    #[error("feature row {0} has zero norm")]
    ZeroVector(usize),
    #[error("feature row {0} is not finite")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoAsr,
    TooLong,
    GamingCategory,
    TooFewObjects,
    StaticVisuals,
    Passed,
}

impl RejectReason {
    pub const ALL: [RejectReason; 6] = [
        Self::NoAsr,
        Self::TooLong,
        Self::GamingCategory,
        Self::TooFewObjects,
        Self::StaticVisuals,
        Self::Passed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoAsr => "no_asr",
            Self::TooLong => "too_long",
            Self::GamingCategory => "gaming_category",
            Self::TooFewObjects => "too_few_objects",
            Self::StaticVisuals => "static_visuals",
            Self::Passed => "passed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

/// `verdict` is always derived from `reason`; construct through
/// [`FilterDecision::from_reason`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FilterDecision {
    pub verdict: Verdict,
    pub reason: RejectReason,
}

impl FilterDecision {
    pub fn from_reason(reason: RejectReason) -> Self {
        let verdict = if reason == RejectReason::Passed {
            Verdict::Accept
        } else {
            Verdict::Reject
        };
        Self { verdict, reason }
    }

    pub fn accept() -> Self {
        Self::from_reason(RejectReason::Passed)
    }

    pub fn is_accept(&self) -> bool {
        self.verdict == Verdict::Accept
    }
}

/// The metadata fields the first three gates read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub has_english_asr: bool,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub category: String,
}

/// How "objects present" are counted across the thumbnail grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectCounting {
    /// Every (thumbnail, class) cell at or above the threshold counts.
    #[default]
    Cells,
    /// A class counts once if any thumbnail has it at or above the threshold.
    DistinctClasses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub max_duration_s: f64,
    pub excluded_category: String,
    pub prob_threshold: f64,
    pub min_objects: usize,
    pub sim_threshold: f64,
    pub counting: ObjectCounting,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_duration_s: 1200.0,
            excluded_category: "Gaming".into(),
            prob_threshold: 0.30,
            min_objects: 4,
            sim_threshold: 0.9,
            counting: ObjectCounting::Cells,
        }
    }
}

pub fn metadata_gate(meta: &VideoMeta, cfg: &FilterConfig) -> FilterDecision {
    let reason = if !meta.has_english_asr {
        RejectReason::NoAsr
    } else if meta.duration > cfg.max_duration_s || meta.duration.is_nan() {
        RejectReason::TooLong
    } else if meta.category.trim().to_lowercase() == cfg.excluded_category.trim().to_lowercase() {
        RejectReason::GamingCategory
    } else {
        RejectReason::Passed
    };
    FilterDecision::from_reason(reason)
}

/// Per-thumbnail classifier outputs: `object_probs` is 4 x K, `features`
/// is 4 x D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThumbnailEvidence {
    pub object_probs: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
}

impl ThumbnailEvidence {
    pub fn check(&self) -> Result<(), FilterError> {
        for (matrix, rows) in [("object_probs", &self.object_probs), ("features", &self.features)] {
            if rows.len() != THUMBNAILS {
                return Err(FilterError::RowCount {
                    matrix,
                    rows: rows.len(),
                });
            }
            if rows.iter().any(|r| r.len() != rows[0].len()) {
                return Err(FilterError::Ragged { matrix });
            }
        }
        for (row, probs) in self.object_probs.iter().enumerate() {
            for (col, &value) in probs.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(FilterError::Probability { row, col, value });
                }
            }
        }
        for (row, f) in self.features.iter().enumerate() {
            if f.iter().any(|x| !x.is_finite()) {
                return Err(FilterError::NonFinite(row));
            }
            if f.iter().all(|&x| x == 0.0) {
                return Err(FilterError::ZeroVector(row));
            }
        }
        Ok(())
    }

    pub fn object_count(&self, threshold: f64, counting: ObjectCounting) -> usize {
        match counting {
            ObjectCounting::Cells => self
                .object_probs
                .iter()
                .flatten()
                .filter(|&&p| p >= threshold)
                .count(),
            ObjectCounting::DistinctClasses => {
                let classes = self.object_probs.first().map_or(0, Vec::len);
                (0..classes)
                    .filter(|&c| self.object_probs.iter().any(|row| row[c] >= threshold))
                    .count()
            }
        }
    }

    /// Mean cosine similarity over the six unordered thumbnail pairs.
    pub fn mean_pairwise_cosine(&self) -> f64 {
        let norms: Vec<f64> = self
            .features
            .iter()
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let mut total = 0.0;
        let mut pairs = 0;
        for a in 0..self.features.len() {
            for b in a + 1..self.features.len() {
                let dot: f64 = self.features[a].iter().zip(&self.features[b]).map(|(x, y)| x * y).sum();
                total += dot / (norms[a] * norms[b]);
                pairs += 1;
            }
        }
        total / pairs as f64
    }
}

pub fn thumbnail_gate(ev: &ThumbnailEvidence, cfg: &FilterConfig) -> Result<FilterDecision, FilterError> {
    ev.check()?;
    if ev.object_count(cfg.prob_threshold, cfg.counting) < cfg.min_objects {
        return Ok(FilterDecision::from_reason(RejectReason::TooFewObjects));
    }
    if ev.mean_pairwise_cosine() > cfg.sim_threshold {
        return Ok(FilterDecision::from_reason(RejectReason::StaticVisuals));
    }
    Ok(FilterDecision::accept())
}

/// Runs the metadata gates, then the thumbnail gates when evidence exists.
pub fn full_gate(
    meta: &VideoMeta,
    evidence: Option<&ThumbnailEvidence>,
    cfg: &FilterConfig,
) -> Result<FilterDecision, FilterError> {
    let d = metadata_gate(meta, cfg);
    match evidence {
        Some(ev) if d.is_accept() => thumbnail_gate(ev, cfg),
        _ => Ok(d),
    }
}
