//! Attention-guided span masking for masked language modeling.
//!
//! Seed positions are drawn without replacement, half of the time from the
//! most-attended tokens and otherwise uniformly. Each seed then grows left
//! and right by geometric lengths, and every resulting target gets a
//! replacement action.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("attention profile has {weights} weights for {tokens} tokens")]
    LengthMismatch { weights: usize, tokens: usize },
    #[error("attention weight at {0} is negative or not finite")]
    BadWeight(usize),
    #[error("special position {0} is out of range")]
    SpecialOutOfRange(usize),
    #[error("target {position} is out of range for {len} tokens")]
    OutOfRange { position: usize, len: usize },
    #[error("{name} = {value} is outside its valid range")]
    Config { name: &'static str, value: f64 },
    #[error("no ordinary vocabulary ids to draw random replacements from")]
    EmptyVocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionProfile {
    pub weights: Vec<f64>,
    #[serde(default)]
    pub special_positions: BTreeSet<usize>,
}

impl AttentionProfile {
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            special_positions: BTreeSet::new(),
        }
    }

    pub fn check(&self, n_tokens: usize) -> Result<(), MaskError> {
        if self.weights.len() != n_tokens {
            return Err(MaskError::LengthMismatch {
                weights: self.weights.len(),
                tokens: n_tokens,
            });
        }
        if let Some(i) = self.weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(MaskError::BadWeight(i));
        }
        if let Some(&p) = self.special_positions.iter().find(|&&p| p >= n_tokens) {
            return Err(MaskError::SpecialOutOfRange(p));
        }
        Ok(())
    }

    pub fn maskable(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|i| !self.special_positions.contains(i))
            .collect()
    }

    pub fn is_special(&self, i: usize) -> bool {
        self.special_positions.contains(&i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskAction {
    MaskToken,
    RandomToken,
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    pub rate: f64,
    pub attended_share: f64,
    pub top_frac: f64,
    /// Mean extra tokens added on each side of a seed.
    pub span_mean: f64,
    /// Probabilities of mask / random / keep; must sum to 1.
    pub action_split: [f64; 3],
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            rate: 0.20,
            attended_share: 0.50,
            top_frac: 0.20,
            span_mean: 0.5,
            action_split: [0.8, 0.1, 0.1],
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<(), MaskError> {
        for (name, value) in [
            ("rate", self.rate),
            ("attended_share", self.attended_share),
            ("top_frac", self.top_frac),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(MaskError::Config { name, value });
            }
        }
        if !(self.span_mean >= 0.0 && self.span_mean.is_finite()) {
            return Err(MaskError::Config {
                name: "span_mean",
                value: self.span_mean,
            });
        }
        let sum: f64 = self.action_split.iter().sum();
        if self.action_split.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
            return Err(MaskError::Config {
                name: "action_split",
                value: sum,
            });
        }
        Ok(())
    }

    /// Continuation probability of the per-side geometric length:
    /// `P(len = k) = (1 - p) p^k` has mean `p / (1 - p)`.
    pub fn span_continue_prob(&self) -> f64 {
        self.span_mean / (1.0 + self.span_mean)
    }
}

/// Draw counters, kept so callers can audit the sampling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskStats {
    pub maskable: usize,
    pub seeds: usize,
    pub seeds_from_attended: usize,
    /// Sum of the sampled per-side extension lengths, before clipping.
    pub extension_draws: usize,
    pub extension_total: usize,
    pub seed_actions: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MaskPlan {
    pub actions: BTreeMap<usize, MaskAction>,
    pub seeds: Vec<usize>,
    pub stats: MaskStats,
}

impl MaskPlan {
    pub fn targets(&self) -> impl Iterator<Item = usize> + '_ {
        self.actions.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

fn ceil_count(frac: f64, n: usize) -> usize {
    // guard against 0.2 * 15 = 3.0000000000000004
    ((frac * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Number of seeds for `n` maskable tokens.
pub fn seed_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64) + 1e-9).round().min(n as f64) as usize
}

/// The `ceil(top_frac * maskable)` maskable positions with the largest
/// weights; equal weights prefer the lower index.
pub fn attended_set(profile: &AttentionProfile, top_frac: f64) -> BTreeSet<usize> {
    let mut maskable = profile.maskable();
    let k = ceil_count(top_frac, maskable.len()).min(maskable.len());
    maskable.sort_by(|&a, &b| profile.weights[b].total_cmp(&profile.weights[a]).then(a.cmp(&b)));
    maskable.truncate(k);
    maskable.into_iter().collect()
}

/// Set of positions supporting O(1) uniform draw and removal.
struct Pool {
    items: Vec<usize>,
    slot: Vec<usize>,
}

impl Pool {
    const ABSENT: usize = usize::MAX;

    fn new(items: Vec<usize>, universe: usize) -> Self {
        let mut slot = vec![Self::ABSENT; universe];
        for (i, &p) in items.iter().enumerate() {
            slot[p] = i;
        }
        Self { items, slot }
    }

    fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        self.items[rng.gen_range(0..self.items.len())]
    }

    fn remove(&mut self, p: usize) {
        let i = self.slot[p];
        if i == Self::ABSENT {
            return;
        }
        let last = *self.items.last().expect("non-empty when present");
        self.items.swap_remove(i);
        if last != p {
            self.slot[last] = i;
        }
        self.slot[p] = Self::ABSENT;
    }
}

fn draw_action<R: Rng>(split: &[f64; 3], rng: &mut R) -> MaskAction {
    let u: f64 = rng.gen();
    if u < split[0] {
        MaskAction::MaskToken
    } else if u < split[0] + split[1] {
        MaskAction::RandomToken
    } else {
        MaskAction::Keep
    }
}

fn geometric<R: Rng>(p: f64, rng: &mut R) -> usize {
    let mut k = 0;
    while p > 0.0 && rng.gen_bool(p) {
        k += 1;
    }
    k
}

/// Chooses seeds and spans for one sequence.
///
/// Extension stops at sequence bounds and at special positions. Positions
/// reached by more than one span keep the action of the earliest seed.
pub fn select_targets<R: Rng>(
    n_tokens: usize,
    profile: &AttentionProfile,
    cfg: &MaskConfig,
    rng: &mut R,
) -> Result<MaskPlan, MaskError> {
    cfg.validate()?;
    profile.check(n_tokens)?;
    let maskable = profile.maskable();
    let n_seeds = seed_count(cfg.rate, maskable.len());
    let mut plan = MaskPlan {
        stats: MaskStats {
            maskable: maskable.len(),
            ..Default::default()
        },
        ..Default::default()
    };
    if n_seeds == 0 {
        return Ok(plan);
    }

    let attended: Vec<usize> = attended_set(profile, cfg.top_frac).into_iter().collect();
    let mut attended_pool = Pool::new(attended, n_tokens);
    let mut any_pool = Pool::new(maskable, n_tokens);
    let p = cfg.span_continue_prob();

    for _ in 0..n_seeds {
        let from_attended = rng.gen_bool(cfg.attended_share);
        let seed = if from_attended && !attended_pool.is_empty() {
            plan.stats.seeds_from_attended += 1;
            attended_pool.draw(rng)
        } else {
            any_pool.draw(rng)
        };
        attended_pool.remove(seed);
        any_pool.remove(seed);

        let action = draw_action(&cfg.action_split, rng);
        plan.stats.seed_actions[action as usize] += 1;
        plan.seeds.push(seed);
        plan.actions.entry(seed).or_insert(action);

        let left = geometric(p, rng);
        let right = geometric(p, rng);
        plan.stats.extension_draws += 2;
        plan.stats.extension_total += left + right;
        for pos in (seed.saturating_sub(left)..seed).rev() {
            if profile.is_special(pos) {
                break;
            }
            plan.actions.entry(pos).or_insert(action);
        }
        for pos in seed + 1..=(seed + right).min(n_tokens - 1) {
            if profile.is_special(pos) {
                break;
            }
            plan.actions.entry(pos).or_insert(action);
        }
    }
    plan.stats.seeds = plan.seeds.len();
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    pub tokens: Vec<u32>,
    /// Original id at every target, `None` elsewhere.
    pub labels: Vec<Option<u32>>,
}

/// Applies a plan. `random_pool` lists the ids random replacements are drawn
/// from (the ordinary, non-special vocabulary).
pub fn apply_plan<R: Rng>(
    tokens: &[u32],
    plan: &MaskPlan,
    mask_id: u32,
    random_pool: &[u32],
    rng: &mut R,
) -> Result<Corruption, MaskError> {
    if let Some((&position, _)) = plan.actions.iter().find(|(&p, _)| p >= tokens.len()) {
        return Err(MaskError::OutOfRange {
            position,
            len: tokens.len(),
        });
    }
    let mut out = tokens.to_vec();
    let mut labels = vec![None; tokens.len()];
    for (&pos, &action) in &plan.actions {
        labels[pos] = Some(tokens[pos]);
        match action {
            MaskAction::MaskToken => out[pos] = mask_id,
            MaskAction::RandomToken => {
                if random_pool.is_empty() {
                    return Err(MaskError::EmptyVocabulary);
                }
                out[pos] = random_pool[rng.gen_range(0..random_pool.len())];
            }
            MaskAction::Keep => {}
        }
    }
    Ok(Corruption { tokens: out, labels })
}

/// Ordinary ids in `[0, vocab_size)` excluding `specials`.
pub fn ordinary_pool(vocab_size: u32, specials: &BTreeSet<u32>) -> Vec<u32> {
    (0..vocab_size).filter(|id| !specials.contains(id)).collect()
}
