//! Segmentation of timed tokens into caption segments, packing of segment
//! streams into fixed-size examples, and sequence-shape arithmetic for the
//! joint and language-only encoders.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    PackedExample, Provenance, Segment, TimedToken, TimedWord, Variant, VideoRecord, DEFAULT_EXAMPLE_SEGMENTS,
    DEFAULT_SEGMENT_TOKENS,
};
use crate::tokenizer::Tokenizer;
use crate::SCHEMA_VERSION;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("word {word_index} expands to {tokens} tokens, more than the segment limit {limit}")]
    OversizeWord {
        word_index: usize,
        tokens: usize,
        limit: usize,
    },
    #[error("token {0} is out of word order")]
    Unsorted(usize),
    #[error("segment limit must be at least 1")]
    ZeroLimit,
    #[error("{what}: {value} is not divisible by {divisor}")]
    Divisibility {
        what: &'static str,
        value: usize,
        divisor: usize,
    },
    #[error("{0} must be positive")]
    Zero(&'static str),
}

/// Expands each word into its BPE tokens; every token carries its word's
/// index and time span.
pub fn tokenize_words(words: &[TimedWord], tokenizer: &dyn Tokenizer) -> Vec<TimedToken> {
    words
        .iter()
        .enumerate()
        .flat_map(|(wi, w)| {
            tokenizer
                .encode_word(&w.text)
                .into_iter()
                .map(move |id| TimedToken::new(id, wi, w.start, w.end))
        })
        .collect()
}

/// Greedy left-to-right packing of whole words into segments of at most
/// `max_tokens` tokens. A word never straddles two segments.
pub fn segment_transcript(
    tokens: &[TimedToken],
    max_tokens: usize,
    variant: Variant,
) -> Result<Vec<Segment>, SegmentError> {
    if max_tokens == 0 {
        return Err(SegmentError::ZeroLimit);
    }
    let mut segments = Vec::new();
    let mut current: Vec<TimedToken> = Vec::with_capacity(max_tokens);
    let mut i = 0;
    while i < tokens.len() {
        let word_index = tokens[i].word_index;
        if i > 0 && word_index < tokens[i - 1].word_index {
            return Err(SegmentError::Unsorted(i));
        }
        let mut end = i + 1;
        while end < tokens.len() && tokens[end].word_index == word_index {
            end += 1;
        }
        let word = &tokens[i..end];
        if word.len() > max_tokens {
            return Err(SegmentError::OversizeWord {
                word_index,
                tokens: word.len(),
                limit: max_tokens,
            });
        }
        if current.len() + word.len() > max_tokens {
            segments.extend(Segment::from_tokens(std::mem::take(&mut current), variant));
        }
        current.extend_from_slice(word);
        i = end;
    }
    segments.extend(Segment::from_tokens(current, variant));
    Ok(segments)
}

/// A frame to extract: the video and the segment's middle timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub video_id: String,
    pub segment_index: usize,
    pub frame_time_s: f64,
}

pub fn frame_manifest(record: &VideoRecord) -> Vec<FrameRef> {
    record
        .segments
        .iter()
        .enumerate()
        .map(|(segment_index, s)| FrameRef {
            video_id: record.video_id.clone(),
            segment_index,
            frame_time_s: s.frame_time,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackStats {
    pub videos: usize,
    pub segments_in: usize,
    pub examples: usize,
    pub dropped: usize,
}

/// Streaming packer: segments are concatenated in arrival order and cut
/// into blocks of exactly `size`. Never pads.
#[derive(Debug, Clone)]
pub struct Packer {
    size: usize,
    cross_video: bool,
    buffer: Vec<(Segment, Provenance)>,
    stats: PackStats,
}

impl Packer {
    pub fn new(size: usize, cross_video: bool) -> Result<Self, SegmentError> {
        if size == 0 {
            return Err(SegmentError::Zero("segments_per_example"));
        }
        Ok(Self {
            size,
            cross_video,
            buffer: Vec::with_capacity(size),
            stats: PackStats::default(),
        })
    }

    pub fn push(&mut self, video: VideoRecord) -> Vec<PackedExample> {
        self.stats.videos += 1;
        self.stats.segments_in += video.segments.len();
        if !self.cross_video {
            self.stats.dropped += self.buffer.len();
            self.buffer.clear();
        }
        let mut out = Vec::new();
        for (segment_index, seg) in video.segments.into_iter().enumerate() {
            self.buffer.push((
                seg,
                Provenance {
                    video_id: video.video_id.clone(),
                    segment_index,
                },
            ));
            if self.buffer.len() == self.size {
                let (segments, provenance) = std::mem::take(&mut self.buffer).into_iter().unzip();
                self.buffer.reserve(self.size);
                out.push(PackedExample {
                    schema_version: SCHEMA_VERSION,
                    segments,
                    provenance,
                });
                self.stats.examples += 1;
            }
        }
        out
    }

    /// Drops whatever is buffered and returns the final counts.
    pub fn finish(mut self) -> PackStats {
        self.stats.dropped += self.buffer.len();
        self.buffer.clear();
        self.stats
    }

    pub fn stats(&self) -> PackStats {
        self.stats
    }

    pub fn pending(&self) -> usize {
        self.buffer.len()
    }
}

/// Iterator adapter over [`Packer`]. After exhaustion, [`Self::stats`]
/// includes the dropped remainder.
pub struct PackExamples<I> {
    inner: I,
    packer: Option<Packer>,
    ready: std::collections::VecDeque<PackedExample>,
    final_stats: Option<PackStats>,
}

impl<I: Iterator<Item = VideoRecord>> Iterator for PackExamples<I> {
    type Item = PackedExample;

    fn next(&mut self) -> Option<PackedExample> {
        loop {
            if let Some(ex) = self.ready.pop_front() {
                return Some(ex);
            }
            let packer = self.packer.as_mut()?;
            match self.inner.next() {
                Some(video) => self.ready.extend(packer.push(video)),
                None => {
                    self.final_stats = self.packer.take().map(Packer::finish);
                    return None;
                }
            }
        }
    }
}

impl<I> PackExamples<I> {
    pub fn stats(&self) -> PackStats {
        self.final_stats
            .or_else(|| self.packer.as_ref().map(Packer::stats))
            .unwrap_or_default()
    }
}

pub fn pack_examples<I>(stream: I, size: usize, cross_video: bool) -> Result<PackExamples<I::IntoIter>, SegmentError>
where
    I: IntoIterator<Item = VideoRecord>,
{
    Ok(PackExamples {
        inner: stream.into_iter(),
        packer: Some(Packer::new(size, cross_video)?),
        ready: Default::default(),
        final_stats: None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeConfig {
    pub image_width: usize,
    pub image_height: usize,
    pub patch: usize,
    pub pool: usize,
    pub group_segments: usize,
    pub tokens_per_segment: usize,
    pub segments_per_example: usize,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        Self {
            image_width: 192,
            image_height: 352,
            patch: 16,
            pool: 2,
            group_segments: 4,
            tokens_per_segment: DEFAULT_SEGMENT_TOKENS,
            segments_per_example: DEFAULT_EXAMPLE_SEGMENTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceShape {
    pub cells_per_frame: usize,
    pub visual_tokens_per_frame: usize,
    pub joint_sequence_length: usize,
    pub language_only_length: usize,
}

/// Token counts implied by a shape config. Each frame contributes its pooled
/// feature cells plus one CLS; caption CLS tokens live inside the segment's
/// token budget.
pub fn sequence_shape(cfg: &ShapeConfig) -> Result<SequenceShape, SegmentError> {
    for (name, v) in [
        ("image_width", cfg.image_width),
        ("image_height", cfg.image_height),
        ("patch", cfg.patch),
        ("pool", cfg.pool),
        ("group_segments", cfg.group_segments),
        ("tokens_per_segment", cfg.tokens_per_segment),
        ("segments_per_example", cfg.segments_per_example),
    ] {
        if v == 0 {
            return Err(SegmentError::Zero(name));
        }
    }
    let stride = cfg.patch * cfg.pool;
    for (what, value) in [("image_width", cfg.image_width), ("image_height", cfg.image_height)] {
        if value % stride != 0 {
            return Err(SegmentError::Divisibility {
                what,
                value,
                divisor: stride,
            });
        }
    }
    let cells_per_frame = (cfg.image_width / stride) * (cfg.image_height / stride);
    let visual_tokens_per_frame = cells_per_frame + 1;
    Ok(SequenceShape {
        cells_per_frame,
        visual_tokens_per_frame,
        joint_sequence_length: cfg.group_segments * (visual_tokens_per_frame + cfg.tokens_per_segment),
        language_only_length: cfg.segments_per_example * cfg.tokens_per_segment,
    })
}

/// Splits segments into consecutive groups of `group` for the joint encoder.
pub fn group_for_joint(segments: &[Segment], group: usize) -> Result<Vec<&[Segment]>, SegmentError> {
    if group == 0 {
        return Err(SegmentError::Zero("group"));
    }
    if !segments.len().is_multiple_of(group) {
        return Err(SegmentError::Divisibility {
            what: "segments",
            value: segments.len(),
            divisor: group,
        });
    }
    Ok(segments.chunks(group).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_record;

    fn words_with_sizes(sizes: &[usize]) -> Vec<TimedToken> {
        let mut out = Vec::new();
        for (w, &n) in sizes.iter().enumerate() {
            for k in 0..n {
                out.push(TimedToken::new((w * 10 + k) as u32, w, w as f64, w as f64 + 0.5));
            }
        }
        out
    }

    fn video(id: &str, n: usize) -> VideoRecord {
        let segs = (0..n)
            .map(|i| Segment::from_tokens(vec![TimedToken::new(1, i, i as f64, i as f64 + 1.0)], Variant::Clean).unwrap())
            .collect();
        VideoRecord::new(id, n as f64, "Science", true, segs)
    }

    #[test]
    fn exact_fill() {
        let segs = segment_transcript(&words_with_sizes(&[1; 64]), 32, Variant::Noisy).unwrap();
        assert_eq!(segs.iter().map(Segment::len).collect::<Vec<_>>(), vec![32, 32]);
    }

    #[test]
    fn multi_token_word_is_not_split() {
        let mut sizes = vec![1; 31];
        sizes.push(2);
        let segs = segment_transcript(&words_with_sizes(&sizes), 32, Variant::Noisy).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].len(), 31);
        assert_eq!(segs[1].len(), 2);
        assert_eq!(segs[1].tokens[0].word_index, 31);
    }

    #[test]
    fn frame_time_is_the_midpoint() {
        let toks = vec![TimedToken::new(1, 0, 10.0, 12.0), TimedToken::new(2, 1, 18.0, 20.0)];
        let segs = segment_transcript(&toks, 32, Variant::Clean).unwrap();
        assert_eq!(segs[0].frame_time, 15.0);
        assert_eq!((segs[0].start(), segs[0].end()), (10.0, 20.0));
    }

    #[test]
    fn oversize_word_errors() {
        let err = segment_transcript(&words_with_sizes(&[1, 33]), 32, Variant::Noisy).unwrap_err();
        assert_eq!(
            err,
            SegmentError::OversizeWord {
                word_index: 1,
                tokens: 33,
                limit: 32
            }
        );
    }

    #[test]
    fn empty_transcript_gives_no_segments() {
        assert!(segment_transcript(&[], 32, Variant::Noisy).unwrap().is_empty());
    }

    #[test]
    fn segmented_record_validates() {
        let words: Vec<TimedWord> = (0..100)
            .map(|i| TimedWord::new(format!("w{i}"), i as f64 * 0.3, i as f64 * 0.3 + 0.25))
            .collect();
        let toks = tokenize_words(&words, &crate::tokenizer::ByteTokenizer);
        let segs = segment_transcript(&toks, 32, Variant::Noisy).unwrap();
        let rec = VideoRecord::new("v", 40.0, "x", true, segs);
        assert!(validate_record(&rec).is_empty());
    }

    #[test]
    fn one_long_video_splits_exactly() {
        let mut it = pack_examples([video("a", 32)], 16, true).unwrap();
        let ex: Vec<_> = it.by_ref().collect();
        assert_eq!(ex.len(), 2);
        assert_eq!(it.stats().dropped, 0);
        assert_eq!(ex[1].provenance[0].segment_index, 16);
    }

    #[test]
    fn short_videos_merge() {
        let mut it = pack_examples([video("a", 10), video("b", 6)], 16, true).unwrap();
        let ex: Vec<_> = it.by_ref().collect();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].provenance[9].video_id, "a");
        assert_eq!(ex[0].provenance[10], Provenance { video_id: "b".into(), segment_index: 0 });
        assert_eq!(it.stats().dropped, 0);
    }

    #[test]
    fn remainder_is_dropped() {
        let mut it = pack_examples([video("a", 20), video("b", 10)], 16, true).unwrap();
        let ex: Vec<_> = it.by_ref().collect();
        assert_eq!(ex.len(), 1);
        assert!(ex[0].provenance.iter().all(|p| p.video_id == "a"));
        let s = it.stats();
        assert_eq!((s.segments_in, s.examples, s.dropped), (30, 1, 14));
    }

    #[test]
    fn no_cross_video_drops_at_boundaries() {
        let mut it = pack_examples([video("a", 10), video("b", 6), video("c", 16)], 16, false).unwrap();
        let ex: Vec<_> = it.by_ref().collect();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].provenance[0].video_id, "c");
        assert_eq!(it.stats().dropped, 16);
    }

    #[test]
    fn default_shape() {
        let s = sequence_shape(&ShapeConfig::default()).unwrap();
        assert_eq!(
            s,
            SequenceShape {
                cells_per_frame: 66,
                visual_tokens_per_frame: 67,
                joint_sequence_length: 396,
                language_only_length: 512
            }
        );
    }

    #[test]
    fn indivisible_shape_errors() {
        let cfg = ShapeConfig {
            patch: 17,
            ..Default::default()
        };
        assert!(matches!(sequence_shape(&cfg), Err(SegmentError::Divisibility { .. })));
    }

    #[test]
    fn grouping() {
        let segs = video("a", 16).segments;
        let g = group_for_joint(&segs, 4).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[1][0], segs[4]);
        assert_eq!(g[3][3], segs[15]);
        assert_eq!(group_for_joint(&segs, 2).unwrap().len(), 8);
        assert!(matches!(
            group_for_joint(&segs[..15], 4),
            Err(SegmentError::Divisibility { value: 15, .. })
        ));
    }
}
