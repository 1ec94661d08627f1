//! Shared data model: timed words, BPE tokens, segments, videos and packed
//! examples, together with their line-delimited JSON encoding.
//!
//! Timestamps are seconds held at millisecond precision. Every constructor and
//! deserializer rounds to the nearest millisecond, and ordering comparisons go
//! through [`to_ms`] so float ties behave.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::SCHEMA_VERSION;

/// Default number of BPE tokens per segment.
pub const DEFAULT_SEGMENT_TOKENS: usize = 32;
/// Default number of segments per packed example.
pub const DEFAULT_EXAMPLE_SEGMENTS: usize = 16;

/// Rounds seconds to the nearest millisecond.
pub fn round_ms(seconds: f64) -> f64 {
    (seconds * 1000.0).round() / 1000.0
}

/// Integer milliseconds, the unit all time comparisons use.
pub fn to_ms(seconds: f64) -> i64 {
    (seconds * 1000.0).round() as i64
}

fn de_seconds<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    Ok(round_ms(v))
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWord {
    pub text: String,
    #[serde(rename = "start_s", deserialize_with = "de_seconds")]
    pub start: f64,
    #[serde(rename = "end_s", deserialize_with = "de_seconds")]
    pub end: f64,
}

impl TimedWord {
    pub fn new(text: impl Into<String>, start: f64, end: f64) -> Self {
        Self {
            text: text.into(),
            start: round_ms(start),
            end: round_ms(end),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedToken {
    #[serde(rename = "id")]
    pub token_id: u32,
    pub word_index: usize,
    #[serde(rename = "start_s", deserialize_with = "de_seconds")]
    pub start: f64,
    #[serde(rename = "end_s", deserialize_with = "de_seconds")]
    pub end: f64,
}

impl TimedToken {
    pub fn new(token_id: u32, word_index: usize, start: f64, end: f64) -> Self {
        Self {
            token_id,
            word_index,
            start: round_ms(start),
            end: round_ms(end),
        }
    }
}

/// Which transcript a segment's text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Clean,
    Noisy,
}

/// One frame timestamp paired with up to `L` caption tokens.
///
/// `start` and `end` are not stored; they are the first token's start and
/// the last token's end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub tokens: Vec<TimedToken>,
    #[serde(rename = "frame_time_s", deserialize_with = "de_seconds")]
    pub frame_time: f64,
    pub variant: Variant,
}

impl Segment {
    /// Builds a segment whose frame time is the midpoint of its span.
    ///
    /// Returns `None` for an empty token list.
    pub fn from_tokens(tokens: Vec<TimedToken>, variant: Variant) -> Option<Self> {
        let start = tokens.first()?.start;
        let end = tokens.last()?.end;
        Some(Self {
            tokens,
            frame_time: round_ms((start + end) / 2.0),
            variant,
        })
    }

    pub fn start(&self) -> f64 {
        self.tokens.first().map_or(self.frame_time, |t| t.start)
    }

    pub fn end(&self) -> f64 {
        self.tokens.last().map_or(self.frame_time, |t| t.end)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub video_id: String,
    #[serde(rename = "duration_s", deserialize_with = "de_seconds")]
    pub duration: f64,
    pub category: String,
    pub has_english_asr: bool,
    pub segments: Vec<Segment>,
}

impl VideoRecord {
    pub fn new(
        video_id: impl Into<String>,
        duration: f64,
        category: impl Into<String>,
        has_english_asr: bool,
        segments: Vec<Segment>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            video_id: video_id.into(),
            duration: round_ms(duration),
            category: category.into(),
            has_english_asr,
            segments,
        }
    }
}

/// Where a packed slot came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub video_id: String,
    pub segment_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedExample {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub segments: Vec<Segment>,
    pub provenance: Vec<Provenance>,
}

impl PackedExample {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    NonFinite,
    NegativeTime,
    StartAfterEnd,
    EmptyText,
    SegmentLength,
    TokenOrder,
    WordSpan,
    FrameTime,
    SegmentOrder,
    SegmentOverlap,
    WordOrder,
}

/// One broken invariant: the offending field path and the rule it breaks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: Rule,
    pub detail: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: Rule, detail: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}: {}", self.field, self.rule, self.detail)
    }
}

/// Checks every invariant of a record with the default 32-token bound.
pub fn validate_record(record: &VideoRecord) -> Vec<Violation> {
    validate_record_with(record, DEFAULT_SEGMENT_TOKENS)
}

pub fn validate_record_with(record: &VideoRecord, max_tokens: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    if !record.duration.is_finite() {
        out.push(Violation::new("duration_s", Rule::NonFinite, "not finite"));
    } else if record.duration < 0.0 {
        out.push(Violation::new("duration_s", Rule::NegativeTime, "negative duration"));
    }

    for (s, seg) in record.segments.iter().enumerate() {
        let path = format!("segments[{s}]");
        if seg.tokens.is_empty() || seg.tokens.len() > max_tokens {
            out.push(Violation::new(
                format!("{path}.tokens"),
                Rule::SegmentLength,
                format!("{} tokens, expected 1..={max_tokens}", seg.tokens.len()),
            ));
        }
        let mut times_ok = true;
        for (t, tok) in seg.tokens.iter().enumerate() {
            let tpath = format!("{path}.tokens[{t}]");
            if !tok.start.is_finite() || !tok.end.is_finite() {
                out.push(Violation::new(tpath, Rule::NonFinite, "non-finite time"));
                times_ok = false;
                continue;
            }
            if tok.start < 0.0 {
                out.push(Violation::new(&tpath, Rule::NegativeTime, "negative start"));
            }
            if to_ms(tok.start) > to_ms(tok.end) {
                out.push(Violation::new(
                    &tpath,
                    Rule::StartAfterEnd,
                    format!("start {} > end {}", tok.start, tok.end),
                ));
                times_ok = false;
            }
            if t > 0 {
                let prev = &seg.tokens[t - 1];
                if tok.word_index < prev.word_index || to_ms(tok.start) < to_ms(prev.start) {
                    out.push(Violation::new(&tpath, Rule::TokenOrder, "token precedes its predecessor"));
                    times_ok = false;
                } else if tok.word_index == prev.word_index
                    && (to_ms(tok.start) != to_ms(prev.start) || to_ms(tok.end) != to_ms(prev.end))
                {
                    out.push(Violation::new(&tpath, Rule::WordSpan, "tokens of one word disagree on time span"));
                }
            }
        }
        if !seg.frame_time.is_finite() {
            out.push(Violation::new(format!("{path}.frame_time_s"), Rule::NonFinite, "not finite"));
        } else if times_ok && !seg.tokens.is_empty() {
            let f = to_ms(seg.frame_time);
            if f < to_ms(seg.start()) || f > to_ms(seg.end()) {
                out.push(Violation::new(
                    format!("{path}.frame_time_s"),
                    Rule::FrameTime,
                    format!("{} outside [{}, {}]", seg.frame_time, seg.start(), seg.end()),
                ));
            }
        }
        if s > 0 {
            let prev = &record.segments[s - 1];
            if prev.tokens.is_empty() || seg.tokens.is_empty() {
                continue;
            }
            if to_ms(seg.start()) < to_ms(prev.start()) {
                out.push(Violation::new(
                    format!("{path}.start"),
                    Rule::SegmentOrder,
                    format!("starts at {} before previous segment start {}", seg.start(), prev.start()),
                ));
            } else if to_ms(seg.start()) < to_ms(prev.end()) {
                out.push(Violation::new(
                    format!("{path}.start"),
                    Rule::SegmentOverlap,
                    format!("starts at {} before previous segment end {}", seg.start(), prev.end()),
                ));
            }
        }
    }
    out
}

/// Checks the ordering invariants of a raw word-timed transcript.
pub fn validate_words(words: &[TimedWord]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let path = format!("words[{i}]");
        if w.text.trim().is_empty() {
            out.push(Violation::new(&path, Rule::EmptyText, "empty word"));
        }
        if !w.start.is_finite() || !w.end.is_finite() {
            out.push(Violation::new(&path, Rule::NonFinite, "non-finite time"));
            continue;
        }
        if w.start < 0.0 {
            out.push(Violation::new(&path, Rule::NegativeTime, "negative start"));
        }
        if to_ms(w.start) > to_ms(w.end) {
            out.push(Violation::new(&path, Rule::StartAfterEnd, format!("start {} > end {}", w.start, w.end)));
        }
        if i > 0 {
            let prev = &words[i - 1];
            if to_ms(w.start) < to_ms(prev.start) || to_ms(w.start) < to_ms(prev.end) {
                out.push(Violation::new(&path, Rule::WordOrder, "word starts before the previous word ends"));
            }
        }
    }
    out
}

/// Parses one line of the video-record format.
pub fn parse_record_line(line: &str) -> serde_json::Result<VideoRecord> {
    serde_json::from_str(line)
}

pub fn parse_packed_line(line: &str) -> serde_json::Result<PackedExample> {
    serde_json::from_str(line)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(spans: &[(u32, usize, f64, f64)]) -> Segment {
        let tokens = spans
            .iter()
            .map(|&(id, w, s, e)| TimedToken::new(id, w, s, e))
            .collect();
        Segment::from_tokens(tokens, Variant::Noisy).unwrap()
    }

    fn two_segment_record() -> VideoRecord {
        VideoRecord::new(
            "abc",
            30.0,
            "Science",
            true,
            vec![
                seg(&[(10, 0, 0.0, 0.5), (11, 0, 0.0, 0.5), (12, 1, 0.5, 1.0)]),
                seg(&[(13, 2, 1.2, 2.0)]),
            ],
        )
    }

    #[test]
    fn well_formed_record_has_no_violations() {
        assert!(validate_record(&two_segment_record()).is_empty());
    }

    #[test]
    fn oversize_segment_is_flagged_once() {
        let tokens: Vec<_> = (0..33).map(|i| (i as u32, i, i as f64, i as f64 + 0.5)).collect();
        let rec = VideoRecord::new("v", 100.0, "x", true, vec![seg(&tokens)]);
        let v = validate_record(&rec);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].rule, Rule::SegmentLength);
        assert!(v[0].detail.contains("32"));
    }

    #[test]
    fn out_of_order_segments_flagged_once() {
        let mut rec = two_segment_record();
        rec.segments.swap(0, 1);
        let v = validate_record(&rec);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].rule, Rule::SegmentOrder);
    }

    #[test]
    fn frame_time_outside_span() {
        let mut rec = two_segment_record();
        rec.segments[1].frame_time = 5.0;
        let v = validate_record(&rec);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::FrameTime);
        assert_eq!(v[0].field, "segments[1].frame_time_s");
    }

    #[test]
    fn split_word_span_detected() {
        let rec = VideoRecord::new("v", 5.0, "x", true, vec![seg(&[(1, 0, 0.0, 0.5), (2, 0, 0.1, 0.5)])]);
        let v = validate_record(&rec);
        assert!(v.iter().any(|x| x.rule == Rule::WordSpan));
    }

    #[test]
    fn json_field_names_are_exact() {
        let rec = two_segment_record();
        let line = serde_json::to_string(&rec).unwrap();
        for key in [
            "\"video_id\"",
            "\"duration_s\"",
            "\"category\"",
            "\"has_english_asr\"",
            "\"segments\"",
            "\"tokens\"",
            "\"id\"",
            "\"word_index\"",
            "\"start_s\"",
            "\"end_s\"",
            "\"frame_time_s\"",
            "\"variant\":\"noisy\"",
            "\"schema_version\":1",
        ] {
            assert!(line.contains(key), "missing {key} in {line}");
        }
        assert_eq!(parse_record_line(&line).unwrap(), rec);
    }

    #[test]
    fn parse_rounds_to_milliseconds() {
        let line = r#"{"video_id":"a","duration_s":1.00049,"category":"c","has_english_asr":true,
            "segments":[{"tokens":[{"id":1,"word_index":0,"start_s":0.0004,"end_s":0.9996}],
            "frame_time_s":0.5,"variant":"clean"}]}"#;
        let rec = parse_record_line(line).unwrap();
        assert_eq!(rec.schema_version, 1);
        assert_eq!(rec.duration, 1.0);
        assert_eq!(rec.segments[0].tokens[0].start, 0.0);
        assert_eq!(rec.segments[0].tokens[0].end, 1.0);
    }

    #[test]
    fn word_overlap_is_flagged() {
        let words = vec![TimedWord::new("a", 0.0, 1.0), TimedWord::new("b", 0.5, 1.5)];
        let v = validate_words(&words);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::WordOrder);
        let ok = vec![TimedWord::new("a", 0.0, 1.0), TimedWord::new("b", 1.0, 1.5)];
        assert!(validate_words(&ok).is_empty());
    }
}
