//! End-to-end corpus run: filter -> (align) -> segment -> pack, over
//! line-delimited video input records.
//!
//! Records are processed in chunks on a bounded worker pool; results are
//! put back in input order before packing, so output bytes do not depend on
//! the worker count.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::align::{dtw_align, transfer_timing};
use crate::corpus::{validate_words, TimedWord, Variant, VideoRecord};
use crate::denoise::{perplexity_gate, CorruptionConfig, DEFAULT_PERPLEXITY_THRESHOLD};
use crate::filter::{full_gate, FilterConfig, RejectReason, ThumbnailEvidence, VideoMeta};
use crate::mask::MaskConfig;
use crate::objectives::{ContrastiveConfig, DEFAULT_CONTRASTIVE_COEFF};
use crate::segment::{segment_transcript, sequence_shape, tokenize_words, Packer, ShapeConfig};
use crate::tokenizer::{ByteLevelBpe, ByteTokenizer, Tokenizer, TokenizerError};
use crate::SCHEMA_VERSION;

const CHUNK: usize = 512;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("building worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("serializing output: {0}")]
    Json(#[from] serde_json::Error),
}

/// Every tunable in one place; defaults are the published settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory holding `vocab.json` and `merges.txt`; the byte-level
    /// fallback tokenizer is used when unset.
    pub tokenizer_dir: Option<PathBuf>,
    pub seed: u64,
    pub cross_video: bool,
    pub perplexity_threshold: f64,
    pub contrastive_coeff: f64,
    pub shape: ShapeConfig,
    pub filter: FilterConfig,
    pub corrupt: CorruptionConfig,
    pub mask: MaskConfig,
    pub contrastive: ContrastiveConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tokenizer_dir: None,
            seed: 0,
            cross_video: true,
            perplexity_threshold: DEFAULT_PERPLEXITY_THRESHOLD,
            contrastive_coeff: DEFAULT_CONTRASTIVE_COEFF,
            shape: ShapeConfig::default(),
            filter: FilterConfig::default(),
            corrupt: CorruptionConfig::default(),
            mask: MaskConfig::default(),
            contrastive: ContrastiveConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        sequence_shape(&self.shape).map_err(|e| PipelineError::Config(format!("shape: {e}")))?;
        if !self.shape.segments_per_example.is_multiple_of(self.shape.group_segments) {
            return bad(format!(
                "segments_per_example {} is not divisible by group_segments {}",
                self.shape.segments_per_example, self.shape.group_segments
            ));
        }
        if !(self.perplexity_threshold > 0.0 && self.perplexity_threshold.is_finite()) {
            return bad(format!("perplexity_threshold {}", self.perplexity_threshold));
        }
        if !(self.contrastive_coeff >= 0.0 && self.contrastive_coeff.is_finite()) {
            return bad(format!("contrastive_coeff {}", self.contrastive_coeff));
        }
        if !(self.contrastive.tau > 0.0 && self.contrastive.tau.is_finite()) {
            return bad(format!("contrastive.tau {}", self.contrastive.tau));
        }
        let f = &self.filter;
        if !(0.0..=1.0).contains(&f.prob_threshold) || !(-1.0..=1.0).contains(&f.sim_threshold) || !(f.max_duration_s >= 0.0) {
            return bad("filter thresholds out of range".into());
        }
        self.corrupt.validate().map_err(|e| PipelineError::Config(format!("corrupt: {e}")))?;
        self.mask.validate().map_err(|e| PipelineError::Config(format!("mask: {e}")))?;
        Ok(())
    }

    pub fn load_tokenizer(&self) -> Result<Box<dyn Tokenizer>, PipelineError> {
        Ok(match &self.tokenizer_dir {
            Some(dir) => Box::new(ByteLevelBpe::from_dir(dir)?),
            None => Box::new(ByteTokenizer),
        })
    }

    /// SHA-256 over the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// One raw video as it enters the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInput {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub video_id: String,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub category: String,
    pub has_english_asr: bool,
    /// The word-timed ASR track.
    #[serde(default)]
    pub words: Vec<TimedWord>,
    /// Denoised transcript without timing; aligned onto `words` when given.
    #[serde(default)]
    pub clean_words: Option<Vec<String>>,
    #[serde(default)]
    pub thumbnails: Option<ThumbnailEvidence>,
    #[serde(default)]
    pub perplexities: Option<Vec<f64>>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

pub fn parse_input_line(line: &str) -> serde_json::Result<VideoInput> {
    serde_json::from_str(line)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Accepted,
    Rejected(&'static str),
}

pub const HIGH_PERPLEXITY: &str = "high_perplexity";
pub const INVALID_INPUT: &str = "invalid_input";

/// Result of pushing one input through the per-video stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub outcome: Outcome,
    pub record: Option<VideoRecord>,
    pub detail: Option<String>,
}

impl Processed {
    fn reject(reason: &'static str, detail: impl Into<Option<String>>) -> Self {
        Self {
            outcome: Outcome::Rejected(reason),
            record: None,
            detail: detail.into(),
        }
    }
}

/// Gates, optional alignment, tokenization and segmentation for one video.
pub fn process_video(input: &VideoInput, cfg: &PipelineConfig, tokenizer: &dyn Tokenizer) -> Processed {
    let meta = VideoMeta {
        has_english_asr: input.has_english_asr,
        duration: input.duration,
        category: input.category.clone(),
    };
    match full_gate(&meta, input.thumbnails.as_ref(), &cfg.filter) {
        Ok(d) if d.is_accept() => {}
        Ok(d) => return Processed::reject(d.reason.as_str(), None),
        Err(e) => return Processed::reject(INVALID_INPUT, e.to_string()),
    }
    if let Some(ppl) = input.perplexities.as_deref().filter(|p| !p.is_empty()) {
        match perplexity_gate(ppl, cfg.perplexity_threshold) {
            Ok(d) if d.is_accept() => {}
            Ok(d) => return Processed::reject(HIGH_PERPLEXITY, format!("{d:?}")),
            Err(e) => return Processed::reject(INVALID_INPUT, e.to_string()),
        }
    }
    let violations = validate_words(&input.words);
    if let Some(v) = violations.first() {
        return Processed::reject(INVALID_INPUT, v.to_string());
    }

    let (words, variant) = match input.clean_words.as_deref().filter(|c| !c.is_empty()) {
        Some(clean) => {
            let noisy: Vec<&str> = input.words.iter().map(|w| w.text.as_str()).collect();
            let timed = dtw_align(&noisy, clean).and_then(|al| transfer_timing(&al, &input.words, clean));
            match timed {
                Ok(t) => (t, Variant::Clean),
                Err(e) => return Processed::reject(INVALID_INPUT, e.to_string()),
            }
        }
        None => (input.words.clone(), Variant::Noisy),
    };
    let tokens = tokenize_words(&words, tokenizer);
    let segments = match segment_transcript(&tokens, cfg.shape.tokens_per_segment, variant) {
        Ok(s) => s,
        Err(e) => return Processed::reject(INVALID_INPUT, e.to_string()),
    };
    Processed {
        outcome: Outcome::Accepted,
        record: Some(VideoRecord::new(
            input.video_id.clone(),
            input.duration,
            input.category.clone(),
            input.has_english_asr,
            segments,
        )),
        detail: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub inputs: usize,
    pub parse_errors: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
    pub segments: usize,
    pub tokens: usize,
    pub examples: usize,
    pub dropped_remainder: usize,
}

impl Default for StageCounts {
    fn default() -> Self {
        let mut rejected: BTreeMap<String, usize> = RejectReason::ALL
            .iter()
            .filter(|r| **r != RejectReason::Passed)
            .map(|r| (r.as_str().to_owned(), 0))
            .collect();
        rejected.insert(HIGH_PERPLEXITY.into(), 0);
        rejected.insert(INVALID_INPUT.into(), 0);
        Self {
            inputs: 0,
            parse_errors: 0,
            accepted: 0,
            rejected,
            segments: 0,
            tokens: 0,
            examples: 0,
            dropped_remainder: 0,
        }
    }
}

impl StageCounts {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    /// `inputs == accepted + sum(rejected)`.
    pub fn is_conserved(&self) -> bool {
        self.inputs == self.accepted + self.rejected_total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub counts: StageCounts,
}

/// Streams `input` through the pipeline, writing one packed example per
/// line to `output`. Unparseable lines are logged, counted and skipped.
pub fn run_pipeline<R: BufRead, W: Write>(
    cfg: &PipelineConfig,
    input: R,
    mut output: W,
    jobs: usize,
) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let tokenizer = cfg.load_tokenizer()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let mut packer =
        Packer::new(cfg.shape.segments_per_example, cfg.cross_video).map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut counts = StageCounts::default();

    let mut lines = input.lines().enumerate();
    loop {
        let mut chunk = Vec::with_capacity(CHUNK);
        for (no, line) in lines.by_ref() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            chunk.push((no + 1, line));
            if chunk.len() == CHUNK {
                break;
            }
        }
        if chunk.is_empty() {
            break;
        }
        let results: Vec<Result<Processed, (usize, String)>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(no, line)| {
                    parse_input_line(line)
                        .map(|v| process_video(&v, cfg, tokenizer.as_ref()))
                        .map_err(|e| (*no, e.to_string()))
                })
                .collect()
        });
        for r in results {
            match r {
                Err((no, msg)) => {
                    log::warn!("line {no}: skipping unparseable record: {msg}");
                    counts.parse_errors += 1;
                }
                Ok(p) => {
                    counts.inputs += 1;
                    match p.outcome {
                        Outcome::Accepted => counts.accepted += 1,
                        Outcome::Rejected(reason) => {
                            if let Some(d) = &p.detail {
                                log::debug!("rejected ({reason}): {d}");
                            }
                            *counts.rejected.entry(reason.to_owned()).or_default() += 1;
                        }
                    }
                    if let Some(rec) = p.record {
                        counts.segments += rec.segments.len();
                        counts.tokens += rec.segments.iter().map(|s| s.len()).sum::<usize>();
                        for ex in packer.push(rec) {
                            serde_json::to_writer(&mut output, &ex)?;
                            output.write_all(b"\n")?;
                        }
                    }
                }
            }
        }
    }
    let stats = packer.finish();
    counts.examples = stats.examples;
    counts.dropped_remainder = stats.dropped;
    output.flush()?;
    Ok(RunManifest {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        counts,
    })
}
