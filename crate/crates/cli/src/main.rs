mod io;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use vidscript::align::{dtw_align, transfer_timing};
use vidscript::corpus::parse_record_line;
use vidscript::denoise::{corrupt_document_keyed, CorruptionStats, PronunciationTable};
use vidscript::filter::{full_gate, RejectReason, Verdict, VideoMeta};
use vidscript::mask::{apply_plan, ordinary_pool, select_targets, AttentionProfile, MaskStats};
use vidscript::objectives::{
    combine_losses, contrastive_loss, contrastive_loss_from_projections, masked_lm_loss, ordering_loss,
    sample_scramble, EmbeddingMatrix,
};
use vidscript::pipeline::{run_pipeline, PipelineConfig, VideoInput};
use vidscript::reorder::{best_ordering, evaluate_story_set, DistanceKind, PairwiseRelationTable, Permutation};
use vidscript::seed::{item_rng, seeded_rng};
use vidscript::segment::{frame_manifest, segment_transcript, sequence_shape, tokenize_words, Packer};
use vidscript::selfcheck::{self, SelfCheckConfig};
use vidscript::tensor_io::read_matrix_auto;
use vidscript::{TimedWord, Variant, VideoRecord, SCHEMA_VERSION};

use crate::io::{for_each_record, open_input, open_output, read_all, write_line};

/// Label written for positions that carry no training target.
const IGNORE_LABEL: i64 = -100;

#[derive(Parser)]
#[command(name = "vidscript", version, about = "Video transcript corpus tools")]
struct Cli {
    /// TOML pipeline configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; also seeds the corruption stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Input file, `-` for stdin.
    #[arg(short, long, default_value = "-")]
    input: PathBuf,
    /// Output file, `-` for stdout.
    #[arg(short, long, default_value = "-")]
    output: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Apply the metadata and thumbnail gates to raw video lines.
    Filter(Io),
    /// Align denoised transcripts to timed ASR words.
    Align(Io),
    /// Produce synthetic ASR-style corruptions of clean text.
    Corrupt {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        replace_prob: Option<f64>,
        #[arg(long)]
        filler_prob: Option<f64>,
        #[arg(long)]
        homophone_share: Option<f64>,
        /// CMU pronouncing dictionary used for homophone swaps.
        #[arg(long)]
        cmudict: Option<PathBuf>,
    },
    /// Tokenize and segment timed transcripts into video records.
    Segment {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        max_tokens: Option<usize>,
        /// Also write one frame reference per segment here.
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Pack video records into fixed-size examples.
    Pack {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        segments: Option<usize>,
        /// Never merge segments from different videos into one example.
        #[arg(long)]
        no_cross_video: bool,
    },
    /// Choose and apply masked-LM targets.
    Mask {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        mask_id: u32,
        /// Draw random replacements from `[0, vocab_size)` instead of the
        /// tokenizer's ordinary ids.
        #[arg(long)]
        vocab_size: Option<u32>,
        /// Ids never used as random replacements.
        #[arg(long, value_delimiter = ',')]
        special_ids: Vec<u32>,
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Evaluate objective kernels on matrices read from files.
    #[command(subcommand)]
    Loss(LossCommand),
    /// Find the best frame ordering for each relation table.
    ScoreOrder {
        #[command(flatten)]
        io: Io,
        /// Collapse four-class tables to before/after first.
        #[arg(long)]
        two_way: bool,
    },
    /// Order a set of stories and report the macro-averaged metrics.
    EvalStory {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_enum, default_value_t = Distance::Mean)]
        distance: Distance,
    },
    /// Print the sequence lengths implied by the configuration.
    Shape,
    /// Run the built-in invariant checks.
    Selfcheck,
    /// Filter, align, segment and pack in one streaming pass.
    Run {
        #[command(flatten)]
        io: Io,
        /// Where to write the run manifest; stderr when absent.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        no_cross_video: bool,
    },
}

#[derive(Subcommand)]
enum LossCommand {
    Contrastive {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        /// Inputs are raw projections; normalize them first.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        grads: bool,
    },
    Mlm {
        #[arg(long)]
        logits: PathBuf,
        /// JSON array of labels, -100 for ignored rows.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        grads: bool,
    },
    Ordering {
        #[arg(long)]
        logits: PathBuf,
        /// JSON array of true class indices.
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        grads: bool,
    },
    Combine {
        #[arg(long)]
        mlm: f64,
        #[arg(long)]
        contrastive: f64,
        #[arg(long)]
        ordering: f64,
        #[arg(long)]
        coeff: Option<f64>,
    },
    Scramble {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        prob: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Distance {
    Mean,
    Footrule,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.corrupt.rng_seed = seed;
    }
    Ok(cfg)
}

fn validated(cfg: PipelineConfig) -> Result<PipelineConfig> {
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(bad) => {
            eprintln!("{bad} record(s) had data errors");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns the number of data errors.
fn dispatch(cli: &Cli) -> Result<usize> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Filter(io) => filter(&validated(cfg)?, io),
        Command::Align(io) => align(io),
        Command::Corrupt {
            io,
            replace_prob,
            filler_prob,
            homophone_share,
            cmudict,
        } => {
            let c = &mut cfg.corrupt;
            c.replace_prob = replace_prob.unwrap_or(c.replace_prob);
            c.filler_prob = filler_prob.unwrap_or(c.filler_prob);
            c.homophone_share = homophone_share.unwrap_or(c.homophone_share);
            corrupt(&validated(cfg)?, io, cmudict.as_deref())
        }
        Command::Segment { io, max_tokens, frames } => {
            if let Some(m) = max_tokens {
                cfg.shape.tokens_per_segment = *m;
            }
            segment(&validated(cfg)?, io, frames.as_deref())
        }
        Command::Pack {
            io,
            segments,
            no_cross_video,
        } => {
            if let Some(s) = segments {
                cfg.shape.segments_per_example = *s;
            }
            if *no_cross_video {
                cfg.cross_video = false;
            }
            pack(&cfg, io)
        }
        Command::Mask {
            io,
            mask_id,
            vocab_size,
            special_ids,
            rate,
        } => {
            if let Some(r) = rate {
                cfg.mask.rate = *r;
            }
            mask(&validated(cfg)?, io, *mask_id, *vocab_size, special_ids)
        }
        Command::Loss(cmd) => loss(&cfg, cmd),
        Command::ScoreOrder { io, two_way } => score_order(io, *two_way),
        Command::EvalStory { io, distance } => eval_story(io, *distance, cli.jobs),
        Command::Shape => {
            let shape = sequence_shape(&cfg.shape)?;
            println!("{}", serde_json::to_string(&shape)?);
            Ok(0)
        }
        Command::Selfcheck => {
            let results = selfcheck::run(&SelfCheckConfig {
                shape: cfg.shape.clone(),
                tau: cfg.contrastive.tau,
                seed: cfg.seed,
            });
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(results.iter().filter(|r| !r.passed).count())
        }
        Command::Run {
            io,
            manifest,
            no_cross_video,
        } => {
            if *no_cross_video {
                cfg.cross_video = false;
            }
            run(&validated(cfg)?, io, manifest.as_deref(), cli.jobs)
        }
    }
}

#[derive(Serialize)]
struct FilterLine<'a> {
    schema_version: u32,
    video_id: &'a str,
    verdict: Verdict,
    reason: RejectReason,
}

fn filter(cfg: &PipelineConfig, io: &Io) -> Result<usize> {
    let mut out = open_output(&io.output)?;
    let bad = for_each_record(open_input(&io.input)?, |_, v: VideoInput| {
        let meta = VideoMeta {
            has_english_asr: v.has_english_asr,
            duration: v.duration,
            category: v.category.clone(),
        };
        match full_gate(&meta, v.thumbnails.as_ref(), &cfg.filter) {
            Ok(d) => {
                write_line(
                    &mut out,
                    &FilterLine {
                        schema_version: SCHEMA_VERSION,
                        video_id: &v.video_id,
                        verdict: d.verdict,
                        reason: d.reason,
                    },
                )?;
                Ok(None)
            }
            Err(e) => Ok(Some(format!("{}: {e}", v.video_id))),
        }
    })?;
    out.flush()?;
    Ok(bad)
}

#[derive(Deserialize)]
struct AlignRequest {
    #[serde(default)]
    id: Option<String>,
    noisy: Vec<TimedWord>,
    clean: Vec<String>,
}

#[derive(Serialize)]
struct AlignResponse {
    schema_version: u32,
    id: Option<String>,
    cost: u64,
    pairs: Vec<(usize, usize)>,
    words: Vec<TimedWord>,
}

fn align(io: &Io) -> Result<usize> {
    let mut out = open_output(&io.output)?;
    let bad = for_each_record(open_input(&io.input)?, |_, req: AlignRequest| {
        let noisy: Vec<&str> = req.noisy.iter().map(|w| w.text.as_str()).collect();
        let result = dtw_align(&noisy, &req.clean)
            .and_then(|al| transfer_timing(&al, &req.noisy, &req.clean).map(|words| (al, words)));
        match result {
            Ok((al, words)) => {
                write_line(
                    &mut out,
                    &AlignResponse {
                        schema_version: SCHEMA_VERSION,
                        id: req.id,
                        cost: al.total_cost,
                        pairs: al.pairs,
                        words,
                    },
                )?;
                Ok(None)
            }
            Err(e) => Ok(Some(e.to_string())),
        }
    })?;
    out.flush()?;
    Ok(bad)
}

#[derive(Deserialize)]
struct CorruptRequest {
    id: String,
    #[serde(default)]
    words: Option<Vec<String>>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Serialize)]
struct CorruptResponse {
    schema_version: u32,
    id: String,
    words: Vec<String>,
    stats: CorruptionStats,
}

fn corrupt(cfg: &PipelineConfig, io: &Io, cmudict: Option<&Path>) -> Result<usize> {
    let table = match cmudict {
        Some(path) => {
            let text = String::from_utf8_lossy(&read_all(path)?).into_owned();
            PronunciationTable::parse_cmudict(&text)
        }
        None => PronunciationTable::default(),
    };
    let tokenizer = cfg.load_tokenizer()?;
    let mut out = open_output(&io.output)?;
    let bad = for_each_record(open_input(&io.input)?, |_, req: CorruptRequest| {
        let words: Vec<String> = match (req.words, req.text) {
            (Some(w), None) => w,
            (None, Some(t)) => t.split_whitespace().map(String::from).collect(),
            _ => return Ok(Some(format!("{}: give exactly one of `words` or `text`", req.id))),
        };
        let c = corrupt_document_keyed(&words, &req.id, &cfg.corrupt, &table, tokenizer.as_ref())?;
        write_line(
            &mut out,
            &CorruptResponse {
                schema_version: SCHEMA_VERSION,
                id: req.id,
                words: c.words,
                stats: c.stats,
            },
        )?;
        Ok(None)
    })?;
    out.flush()?;
    Ok(bad)
}

fn segment(cfg: &PipelineConfig, io: &Io, frames: Option<&Path>) -> Result<usize> {
    let tokenizer = cfg.load_tokenizer()?;
    let mut out = open_output(&io.output)?;
    let mut frame_out = frames.map(open_output).transpose()?;
    let bad = for_each_record(open_input(&io.input)?, |_, v: VideoInput| {
        let (words, variant) = match v.clean_words.as_deref().filter(|c| !c.is_empty()) {
            Some(clean) => {
                let noisy: Vec<&str> = v.words.iter().map(|w| w.text.as_str()).collect();
                match dtw_align(&noisy, clean).and_then(|al| transfer_timing(&al, &v.words, clean)) {
                    Ok(t) => (t, Variant::Clean),
                    Err(e) => return Ok(Some(format!("{}: {e}", v.video_id))),
                }
            }
            None => (v.words.clone(), Variant::Noisy),
        };
        let tokens = tokenize_words(&words, tokenizer.as_ref());
        let segments = match segment_transcript(&tokens, cfg.shape.tokens_per_segment, variant) {
            Ok(s) => s,
            Err(e) => return Ok(Some(format!("{}: {e}", v.video_id))),
        };
        let record = VideoRecord::new(v.video_id, v.duration, v.category, v.has_english_asr, segments);
        if let Some(f) = frame_out.as_mut() {
            for frame in frame_manifest(&record) {
                write_line(f, &frame)?;
            }
        }
        write_line(&mut out, &record)?;
        Ok(None)
    })?;
    out.flush()?;
    if let Some(mut f) = frame_out {
        f.flush()?;
    }
    Ok(bad)
}

fn pack(cfg: &PipelineConfig, io: &Io) -> Result<usize> {
    let mut packer = Packer::new(cfg.shape.segments_per_example, cfg.cross_video)?;
    let mut out = open_output(&io.output)?;
    let mut bad = 0;
    let input = open_input(&io.input)?;
    for (no, line) in std::io::BufRead::lines(input).enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record_line(&line) {
            Ok(rec) if rec.schema_version == SCHEMA_VERSION => {
                for ex in packer.push(rec) {
                    write_line(&mut out, &ex)?;
                }
            }
            Ok(rec) => {
                log::warn!("line {}: unsupported schema_version {}", no + 1, rec.schema_version);
                bad += 1;
            }
            Err(e) => {
                log::warn!("line {}: {e}", no + 1);
                bad += 1;
            }
        }
    }
    out.flush()?;
    eprintln!("{}", serde_json::to_string(&packer.finish())?);
    Ok(bad)
}

#[derive(Deserialize)]
struct MaskRequest {
    id: String,
    tokens: Vec<u32>,
    #[serde(default)]
    attention: Option<Vec<f64>>,
    #[serde(default)]
    special_positions: BTreeSet<usize>,
}

#[derive(Serialize)]
struct MaskResponse {
    schema_version: u32,
    id: String,
    tokens: Vec<u32>,
    labels: Vec<i64>,
    seeds: Vec<usize>,
    stats: MaskStats,
}

fn mask(cfg: &PipelineConfig, io: &Io, mask_id: u32, vocab_size: Option<u32>, special_ids: &[u32]) -> Result<usize> {
    let specials: BTreeSet<u32> = special_ids.iter().copied().chain([mask_id]).collect();
    let pool: Vec<u32> = match vocab_size {
        Some(v) => ordinary_pool(v, &specials),
        None => {
            let tokenizer = cfg.load_tokenizer()?;
            tokenizer.ordinary_ids().into_iter().filter(|id| !specials.contains(id)).collect()
        }
    };
    let mut out = open_output(&io.output)?;
    let bad = for_each_record(open_input(&io.input)?, |_, req: MaskRequest| {
        let n = req.tokens.len();
        let profile = AttentionProfile {
            weights: req.attention.unwrap_or_else(|| vec![1.0; n]),
            special_positions: req.special_positions,
        };
        let mut rng = item_rng(cfg.seed, &req.id);
        let applied = select_targets(n, &profile, &cfg.mask, &mut rng)
            .and_then(|plan| apply_plan(&req.tokens, &plan, mask_id, &pool, &mut rng).map(|c| (plan, c)));
        let (plan, corrupted) = match applied {
            Ok(x) => x,
            Err(e) => return Ok(Some(format!("{}: {e}", req.id))),
        };
        write_line(
            &mut out,
            &MaskResponse {
                schema_version: SCHEMA_VERSION,
                id: req.id,
                tokens: corrupted.tokens,
                labels: corrupted
                    .labels
                    .iter()
                    .map(|l| l.map_or(IGNORE_LABEL, i64::from))
                    .collect(),
                seeds: plan.seeds,
                stats: plan.stats,
            },
        )?;
        Ok(None)
    })?;
    out.flush()?;
    Ok(bad)
}

fn read_matrix_file(path: &Path) -> Result<EmbeddingMatrix> {
    read_matrix_auto(&read_all(path)?).with_context(|| format!("reading matrix {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_all(path)?).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize)]
struct LossLine {
    schema_version: u32,
    loss: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    gradients: Vec<Vec<Vec<f64>>>,
}

fn print_loss(loss: f64, gradients: &[EmbeddingMatrix]) -> Result<usize> {
    let line = LossLine {
        schema_version: SCHEMA_VERSION,
        loss,
        gradients: gradients.iter().map(EmbeddingMatrix::to_rows).collect(),
    };
    println!("{}", serde_json::to_string(&line)?);
    Ok(0)
}

fn loss(cfg: &PipelineConfig, cmd: &LossCommand) -> Result<usize> {
    match cmd {
        LossCommand::Contrastive {
            frames,
            captions,
            tau,
            raw,
            grads,
        } => {
            let mut c = cfg.contrastive;
            c.tau = tau.unwrap_or(c.tau);
            let (f, cap) = (read_matrix_file(frames)?, read_matrix_file(captions)?);
            let r = if *raw {
                contrastive_loss_from_projections(&f, &cap, &c, *grads)?
            } else {
                contrastive_loss(&f, &cap, &c, *grads)?
            };
            print_loss(r.value, &r.gradients)
        }
        LossCommand::Mlm { logits, labels, grads } => {
            let m = read_matrix_file(logits)?;
            let raw: Vec<i64> = read_json(labels)?;
            let labels = raw
                .iter()
                .map(|&l| match l {
                    IGNORE_LABEL => Ok(None),
                    l if l >= 0 => Ok(Some(l as usize)),
                    l => bail!("label {l} is negative and not the ignore value {IGNORE_LABEL}"),
                })
                .collect::<Result<Vec<_>>>()?;
            let r = masked_lm_loss(&m, &labels, *grads)?;
            print_loss(r.value, &r.gradients)
        }
        LossCommand::Ordering { logits, classes, grads } => {
            let m = read_matrix_file(logits)?;
            let classes: Vec<usize> = read_json(classes)?;
            let r = ordering_loss(&m.to_rows(), &classes, *grads)?;
            print_loss(r.value, &r.gradients)
        }
        LossCommand::Combine {
            mlm,
            contrastive,
            ordering,
            coeff,
        } => {
            let total = combine_losses(*mlm, *contrastive, *ordering, coeff.unwrap_or(cfg.contrastive_coeff))?;
            print_loss(total, &[])
        }
        LossCommand::Scramble { n, prob } => {
            let positions = sample_scramble(*n, *prob, &mut seeded_rng(cfg.seed));
            println!("{}", serde_json::json!({ "schema_version": SCHEMA_VERSION, "positions": positions }));
            Ok(0)
        }
    }
}

#[derive(Deserialize)]
struct ScoreRequest {
    #[serde(default)]
    id: Option<String>,
    #[serde(flatten)]
    table: PairwiseRelationTable,
}

#[derive(Serialize)]
struct ScoreResponse {
    schema_version: u32,
    id: Option<String>,
    ordering: Permutation,
    score: f64,
}

fn score_order(io: &Io, two_way: bool) -> Result<usize> {
    let mut out = open_output(&io.output)?;
    let bad = for_each_record(open_input(&io.input)?, |_, req: ScoreRequest| {
        let table = if two_way { req.table.to_two_way() } else { req.table };
        match table.check().and_then(|_| best_ordering(&table)) {
            Ok((ordering, score)) => {
                write_line(
                    &mut out,
                    &ScoreResponse {
                        schema_version: SCHEMA_VERSION,
                        id: req.id,
                        ordering,
                        score,
                    },
                )?;
                Ok(None)
            }
            Err(e) => Ok(Some(e.to_string())),
        }
    })?;
    out.flush()?;
    Ok(bad)
}

#[derive(Deserialize)]
struct StoryRequest {
    table: PairwiseRelationTable,
    truth: Permutation,
}

fn eval_story(io: &Io, distance: Distance, jobs: usize) -> Result<usize> {
    let mut tables = Vec::new();
    let mut truths = Vec::new();
    let bad = for_each_record(open_input(&io.input)?, |_, req: StoryRequest| {
        if let Err(e) = req.table.check() {
            return Ok(Some(e.to_string()));
        }
        if req.truth.len() != req.table.n {
            return Ok(Some(format!("truth has {} elements, table {}", req.truth.len(), req.table.n)));
        }
        tables.push(req.table);
        truths.push(req.truth);
        Ok(None)
    })?;
    let kind = match distance {
        Distance::Mean => DistanceKind::MeanDisplacement,
        Distance::Footrule => DistanceKind::Footrule,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let report = pool.install(|| evaluate_story_set(&tables, &truths, kind))?;
    let mut out = open_output(&io.output)?;
    write_line(
        &mut out,
        &serde_json::json!({ "schema_version": SCHEMA_VERSION, "report": report }),
    )?;
    out.flush()?;
    Ok(bad)
}

fn run(cfg: &PipelineConfig, io: &Io, manifest_path: Option<&Path>, jobs: usize) -> Result<usize> {
    let input = open_input(&io.input)?;
    let mut out = open_output(&io.output)?;
    let manifest = run_pipeline(cfg, input, &mut out, jobs)?;
    drop(out);
    let text = serde_json::to_string_pretty(&manifest)?;
    match manifest_path {
        Some(p) => std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?,
        None => eprintln!("{text}"),
    }
    Ok(manifest.counts.parse_errors + manifest.counts.rejected.get(vidscript::pipeline::INVALID_INPUT).copied().unwrap_or(0))
}
