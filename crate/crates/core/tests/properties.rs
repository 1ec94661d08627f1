use std::collections::BTreeSet;

use proptest::prelude::*;
use vidscript::corpus::{parse_packed_line, parse_record_line, validate_record, Provenance};
use vidscript::denoise::{corrupt_document, normalize_words, CorruptionConfig, PronunciationTable};
use vidscript::filter::{full_gate, FilterConfig, ObjectCounting, RejectReason, ThumbnailEvidence, VideoMeta};
use vidscript::mask::{attended_set, seed_count, select_targets, AttentionProfile, MaskConfig};
use vidscript::objectives::EmbeddingMatrix;
use vidscript::segment::{pack_examples, segment_transcript, tokenize_words, Packer};
use vidscript::seed::seeded_rng;
use vidscript::tensor_io::{matrix_to_bytes, read_matrix, Dtype};
use vidscript::tokenizer::ByteTokenizer;
use vidscript::{Segment, TimedToken, TimedWord, Variant, VideoRecord};

/// Token stream where word `k` has `sizes[k]` tokens and occupies
/// `[k, k + 0.5]` seconds.
fn tokens_for(sizes: &[usize]) -> Vec<TimedToken> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(w, &n)| (0..n).map(move |t| TimedToken::new(t as u32, w, w as f64, w as f64 + 0.5)))
        .collect()
}

fn video(id: usize, segments: usize) -> VideoRecord {
    let segs = (0..segments)
        .map(|s| {
            let t = s as f64;
            Segment::from_tokens(vec![TimedToken::new(7, s, t, t + 0.5)], Variant::Noisy).unwrap()
        })
        .collect();
    VideoRecord::new(format!("v{id}"), segments as f64, "Howto", true, segs)
}

proptest! {
    #[test]
    fn segments_are_greedy_and_whole_word(sizes in prop::collection::vec(1usize..=32, 0..60), limit in 32usize..=40) {
        let tokens = tokens_for(&sizes);
        let segs = segment_transcript(&tokens, limit, Variant::Noisy).unwrap();
        let flat: Vec<TimedToken> = segs.iter().flat_map(|s| s.tokens.clone()).collect();
        prop_assert_eq!(&flat, &tokens);
        for s in &segs {
            prop_assert!(!s.is_empty() && s.len() <= limit);
        }
        for pair in segs.windows(2) {
            let last = pair[0].tokens.last().unwrap().word_index;
            let first = pair[1].tokens[0].word_index;
            prop_assert!(last < first, "word split across segments");
            prop_assert!(pair[0].len() + sizes[first] > limit, "next word would have fit");
        }
        if limit == 32 {
            let rec = VideoRecord::new("v", sizes.len() as f64, "Howto", true, segs);
            prop_assert!(validate_record(&rec).is_empty(), "{:?}", validate_record(&rec));
        }
    }

    #[test]
    fn frame_time_is_segment_midpoint(words in prop::collection::vec("[a-z]{1,12}", 1..40)) {
        let timed: Vec<TimedWord> = words
            .iter()
            .enumerate()
            .map(|(i, w)| TimedWord::new(w.clone(), i as f64 * 0.7, i as f64 * 0.7 + 0.4))
            .collect();
        let segs = segment_transcript(&tokenize_words(&timed, &ByteTokenizer), 32, Variant::Noisy).unwrap();
        for s in &segs {
            prop_assert!((s.frame_time - (s.start() + s.end()) / 2.0).abs() <= 0.0005 + 1e-12);
        }
    }

    #[test]
    fn packing_is_chunking_of_the_concatenated_stream(
        lengths in prop::collection::vec(0usize..40, 0..20),
        cross_video in any::<bool>(),
    ) {
        let videos: Vec<VideoRecord> = lengths.iter().enumerate().map(|(i, &n)| video(i, n)).collect();
        let mut iter = pack_examples(videos.clone(), 16, cross_video).unwrap();
        let examples: Vec<_> = iter.by_ref().collect();
        let stats = iter.stats();

        let mut expected: Vec<Vec<Provenance>> = Vec::new();
        let tagged = |v: &VideoRecord| -> Vec<Provenance> {
            (0..v.segments.len())
                .map(|segment_index| Provenance { video_id: v.video_id.clone(), segment_index })
                .collect()
        };
        if cross_video {
            let all: Vec<Provenance> = videos.iter().flat_map(tagged).collect();
            expected.extend(all.chunks_exact(16).map(<[_]>::to_vec));
        } else {
            for v in &videos {
                expected.extend(tagged(v).chunks_exact(16).map(<[_]>::to_vec));
            }
        }
        let got: Vec<Vec<Provenance>> = examples.iter().map(|e| e.provenance.clone()).collect();
        prop_assert_eq!(got, expected);
        let total: usize = lengths.iter().sum();
        prop_assert_eq!(stats.segments_in, total);
        prop_assert_eq!(total, 16 * stats.examples + stats.dropped);
        prop_assert!(examples.iter().all(|e| e.segments.len() == 16));
    }

    #[test]
    fn packing_does_not_depend_on_push_batching(lengths in prop::collection::vec(0usize..40, 0..20), split in 0usize..20) {
        let videos: Vec<VideoRecord> = lengths.iter().enumerate().map(|(i, &n)| video(i, n)).collect();
        let whole: Vec<_> = pack_examples(videos.clone(), 16, true).unwrap().collect();
        let split = split.min(videos.len());
        let mut packer = Packer::new(16, true).unwrap();
        let mut out = Vec::new();
        for v in videos[..split].iter().cloned() {
            out.extend(packer.push(v));
        }
        for v in videos[split..].iter().cloned() {
            out.extend(packer.push(v));
        }
        prop_assert_eq!(out, whole);
    }

    #[test]
    fn attended_set_matches_sort_oracle(
        weights in prop::collection::vec(0u8..5, 1..80),
        special_mask in prop::collection::vec(any::<bool>(), 80),
        top_frac in 0.0f64..=1.0,
    ) {
        let specials: BTreeSet<usize> = (0..weights.len()).filter(|&i| special_mask[i] && i % 3 == 0).collect();
        let profile = AttentionProfile {
            weights: weights.iter().map(|&w| f64::from(w)).collect(),
            special_positions: specials.clone(),
        };
        let got = attended_set(&profile, top_frac);

        let mut ranked: Vec<(i64, usize)> = (0..weights.len())
            .filter(|i| !specials.contains(i))
            .map(|i| (-i64::from(weights[i]), i))
            .collect();
        ranked.sort();
        let m = ranked.len();
        let mut k = 0;
        while (k as f64) < top_frac * m as f64 - 1e-9 {
            k += 1;
        }
        let want: BTreeSet<usize> = ranked.into_iter().take(k).map(|(_, i)| i).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn masking_never_touches_specials(
        n in 1usize..200,
        specials in prop::collection::btree_set(0usize..200, 0..30),
        seed in any::<u64>(),
    ) {
        let specials: BTreeSet<usize> = specials.into_iter().filter(|&p| p < n).collect();
        let profile = AttentionProfile {
            weights: (0..n).map(|i| ((i * 37) % 11) as f64).collect(),
            special_positions: specials.clone(),
        };
        let cfg = MaskConfig::default();
        let plan = select_targets(n, &profile, &cfg, &mut seeded_rng(seed)).unwrap();
        prop_assert!(plan.targets().all(|t| t < n && !specials.contains(&t)));
        prop_assert_eq!(plan.seeds.len(), seed_count(cfg.rate, n - specials.len()));
        let distinct: BTreeSet<usize> = plan.seeds.iter().copied().collect();
        prop_assert_eq!(distinct.len(), plan.seeds.len());
        prop_assert!(plan.seeds.iter().all(|s| plan.actions.contains_key(s)));
    }

    #[test]
    fn gate_matches_truth_table(
        asr in any::<bool>(),
        duration in 0.0f64..2400.0,
        gaming in any::<bool>(),
        probs in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 6), 4),
        features in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 5), 4),
    ) {
        prop_assume!(features.iter().all(|r| r.iter().any(|&x| x != 0.0)));
        let cfg = FilterConfig::default();
        let meta = VideoMeta {
            has_english_asr: asr,
            duration,
            category: if gaming { "GAMING".into() } else { "Education".into() },
        };
        let ev = ThumbnailEvidence { object_probs: probs.clone(), features: features.clone() };
        let got = full_gate(&meta, Some(&ev), &cfg).unwrap().reason;

        let objects = probs.iter().flatten().filter(|&&p| p >= 0.30).count();
        let mut cos = 0.0;
        for a in 0..4 {
            for b in a + 1..4 {
                let dot: f64 = features[a].iter().zip(&features[b]).map(|(x, y)| x * y).sum();
                let na: f64 = features[a].iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = features[b].iter().map(|x| x * x).sum::<f64>().sqrt();
                cos += dot / (na * nb) / 6.0;
            }
        }
        let want = if !asr {
            RejectReason::NoAsr
        } else if duration > 1200.0 {
            RejectReason::TooLong
        } else if gaming {
            RejectReason::GamingCategory
        } else if objects < 4 {
            RejectReason::TooFewObjects
        } else if cos > 0.9 {
            RejectReason::StaticVisuals
        } else {
            RejectReason::Passed
        };
        prop_assert_eq!(got, want);

        let scaled: Vec<Vec<f64>> = features.iter().enumerate().map(|(i, r)| r.iter().map(|x| x * (i as f64 + 0.5) * 3.0).collect()).collect();
        let ev2 = ThumbnailEvidence { object_probs: probs.clone(), features: scaled };
        prop_assert_eq!(full_gate(&meta, Some(&ev2), &cfg).unwrap().reason, got);

        let distinct = ev.object_count(0.30, ObjectCounting::DistinctClasses);
        prop_assert!(distinct <= objects);
    }

    #[test]
    fn raising_probabilities_never_loses_objects(
        probs in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 6), 4),
        bump in 0.0f64..0.5,
    ) {
        let features = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
        let ev = ThumbnailEvidence { object_probs: probs.clone(), features: features.clone() };
        let higher: Vec<Vec<f64>> = probs.iter().map(|r| r.iter().map(|p| (p + bump).min(1.0)).collect()).collect();
        let ev2 = ThumbnailEvidence { object_probs: higher, features };
        for counting in [ObjectCounting::Cells, ObjectCounting::DistinctClasses] {
            prop_assert!(ev2.object_count(0.3, counting) >= ev.object_count(0.3, counting));
        }
    }

    #[test]
    fn corruption_is_deterministic(words in prop::collection::vec("[A-Za-z,.!']{1,10}", 0..200), seed in any::<u64>()) {
        let cfg = CorruptionConfig { replace_prob: 0.3, filler_prob: 0.2, rng_seed: seed, ..Default::default() };
        let table = PronunciationTable::from_groups([["there", "their"]]);
        let a = corrupt_document(&words, &cfg, &table, &ByteTokenizer).unwrap();
        let b = corrupt_document(&words, &cfg, &table, &ByteTokenizer).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.words.len(), a.stats.words + a.stats.fillers);
    }

    #[test]
    fn zero_probabilities_only_normalize(words in prop::collection::vec("[A-Za-z0-9,.!?'\"-]{1,10}", 0..100), seed in any::<u64>()) {
        let cfg = CorruptionConfig { replace_prob: 0.0, filler_prob: 0.0, rng_seed: seed, ..Default::default() };
        let out = corrupt_document(&words, &cfg, &PronunciationTable::default(), &ByteTokenizer).unwrap();
        let want: Vec<String> = words
            .iter()
            .map(|w| w.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect::<String>())
            .filter(|w| !w.is_empty())
            .collect();
        prop_assert_eq!(&out.words, &want);
        prop_assert_eq!(normalize_words(&words), want);
    }

    #[test]
    fn record_json_round_trip(sizes in prop::collection::vec(1usize..=8, 1..80), dur in 0.0f64..1000.0) {
        let segs = segment_transcript(&tokens_for(&sizes), 32, Variant::Clean).unwrap();
        let rec = VideoRecord::new("abc", dur, "Howto", true, segs);
        let line = serde_json::to_string(&rec).unwrap();
        let back = parse_record_line(&line).unwrap();
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), line);
        prop_assert_eq!(back.segments, rec.segments);
    }

    #[test]
    fn packed_json_round_trip(lengths in prop::collection::vec(0usize..40, 1..6)) {
        let videos: Vec<VideoRecord> = lengths.iter().enumerate().map(|(i, &n)| video(i, n)).collect();
        for ex in pack_examples(videos, 16, true).unwrap() {
            let line = serde_json::to_string(&ex).unwrap();
            prop_assert_eq!(parse_packed_line(&line).unwrap(), ex);
        }
    }

    #[test]
    fn tensor_container_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        let m = EmbeddingMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1e6..1e6)).collect()).unwrap();
        prop_assert_eq!(read_matrix(&matrix_to_bytes(&m, Dtype::F64)).unwrap(), m.clone());
        let back = read_matrix(&matrix_to_bytes(&m, Dtype::F32)).unwrap();
        for (a, b) in back.data().iter().zip(m.data()) {
            prop_assert_eq!(*a, f64::from(*b as f32));
        }
    }

    #[test]
    fn tensor_reader_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = read_matrix(&bytes);
    }
}
