//! Tabular autoregressive policy and a masked preference-training loop.
//!
//! The policy is an order-`n` categorical model: the distribution of the next
//! token depends on the previous `n` tokens, with positions before the start
//! of a sequence padded with token 0. Gradients of the per-token
//! log-probabilities with respect to the logit table are exact, which makes
//! the effect of a loss mask directly inspectable per context.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;
use crate::objectives::{
    dpo_loss, masked_ce, rejection_sampling_loss, ObjectiveConfig, ObjectiveKind,
};
use crate::segmentation::{
    adaptive_mask, classify_tokens, segments_from_labels, sign_consistent_mask, SchmittConfig,
    SegmentAggregate,
};
use crate::trace::{MaskVector, PairSample, SampleClass, Token, TokenRewardTrace};

const MAX_CONTEXTS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    vocab_size: usize,
    context_order: usize,
    /// `contexts * vocab_size` logits, row-major by context.
    logits: Vec<f64>,
    seed: u64,
}

/// Uniform policy (all logits zero) over `vocab_size` tokens with Markov order
/// `context_order`.
pub fn init_policy(vocab_size: usize, context_order: usize, seed: u64) -> Result<ToyPolicy> {
    if vocab_size < 2 {
        return Err(Error::InvalidDims(format!(
            "vocabulary size must be at least 2, got {vocab_size}"
        )));
    }
    let contexts = u32::try_from(context_order)
        .ok()
        .and_then(|n| vocab_size.checked_pow(n))
        .filter(|&c| c <= MAX_CONTEXTS)
        .ok_or_else(|| {
            Error::InvalidDims(format!(
                "{vocab_size}^{context_order} contexts exceed the limit of {MAX_CONTEXTS}"
            ))
        })?;
    Ok(ToyPolicy {
        vocab_size,
        context_order,
        logits: vec![0.0; contexts * vocab_size],
        seed,
    })
}

impl ToyPolicy {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_order(&self) -> usize {
        self.context_order
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_contexts(&self) -> usize {
        self.logits.len() / self.vocab_size
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Logit row of one context.
    pub fn context_logits(&self, context: usize) -> &[f64] {
        &self.logits[context * self.vocab_size..(context + 1) * self.vocab_size]
    }

    pub fn set_logit(&mut self, context: usize, token: usize, value: f64) {
        self.logits[context * self.vocab_size + token] = value;
    }

    /// Context index of position `t` in `tokens`.
    pub fn context_at(&self, tokens: &[usize], t: usize) -> usize {
        (0..self.context_order).fold(0, |acc, j| {
            // position t - n + j, padded with token 0 before the start
            let prev = (t + j)
                .checked_sub(self.context_order)
                .map_or(0, |p| tokens[p]);
            acc * self.vocab_size + prev
        })
    }

    /// Log-softmax of a context row.
    pub fn log_probs(&self, context: usize) -> Vec<f64> {
        let row = self.context_logits(context);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = numeric::sum(row.iter().map(|x| (x - max).exp())).ln() + max;
        row.iter().map(|x| (x - log_norm).min(0.0)).collect()
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&y| y >= self.vocab_size) {
            Some(y) => Err(Error::TokenOutOfVocab {
                token: y.to_string(),
                vocab: self.vocab_size,
            }),
            None => Ok(()),
        }
    }
}

/// Per-token natural-log probabilities of `tokens` under `policy`.
pub fn trace_logprobs(policy: &ToyPolicy, tokens: &[usize]) -> Result<Vec<f64>> {
    policy.check_tokens(tokens)?;
    Ok((0..tokens.len())
        .map(|t| policy.log_probs(policy.context_at(tokens, t))[tokens[t]])
        .collect())
}

/// Integer token ids of a trace, checked against `vocab_size`.
pub fn token_ids(trace: &TokenRewardTrace, vocab_size: usize) -> Result<Vec<usize>> {
    trace
        .tokens()
        .iter()
        .map(|tok| match tok {
            Token::Id(id) if (0..vocab_size as i64).contains(id) => Ok(*id as usize),
            other => Err(Error::TokenOutOfVocab {
                token: other.to_string(),
                vocab: vocab_size,
            }),
        })
        .collect()
}

/// Which tokens of a pair contribute to the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Masking {
    None,
    /// Per-token reward against a fixed baseline.
    AdaptiveMask {
        baseline: f64,
    },
    /// Schmitt classification, run grouping, then sign-consistent selection
    /// against the sequence reward.
    SignConsistent {
        schmitt: SchmittConfig,
    },
}

impl Masking {
    /// Sign-consistent masking with baseline 0 and no dead band.
    pub fn sign_consistent() -> Self {
        Masking::SignConsistent {
            schmitt: SchmittConfig::default(),
        }
    }

    fn mask_for(&self, trace: &TokenRewardTrace) -> Result<Option<MaskVector>> {
        match self {
            Masking::None => Ok(None),
            Masking::AdaptiveMask { baseline } => Ok(Some(adaptive_mask(trace, *baseline))),
            Masking::SignConsistent { schmitt } => {
                let labels = classify_tokens(trace, schmitt);
                let seg = segments_from_labels(&labels, trace, SegmentAggregate::Mean)?;
                sign_consistent_mask(&seg, trace, schmitt.baseline()).map(Some)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    /// Mean log-probability of positive-reward tokens after each step.
    pub mean_logprob_good: Vec<f64>,
    /// Mean log-probability of negative-reward tokens after each step.
    pub mean_logprob_poison: Vec<f64>,
    /// Good minus poison mean log-probability after the last step (at the
    /// initial policy when `steps == 0`).
    pub final_gap: f64,
}

struct PreparedPair {
    pair: PairSample,
    chosen_ids: Vec<usize>,
    rejected_ids: Vec<usize>,
    masks: Option<(MaskVector, MaskVector)>,
}

/// Mean log-probability over positive- and negative-reward tokens of every
/// trace in `pairs`. `NaN` when a class has no tokens.
fn token_class_means(policy: &ToyPolicy, prepared: &[PreparedPair]) -> Result<(f64, f64)> {
    let mut good = (numeric::CompensatedSum::new(), 0usize);
    let mut poison = (numeric::CompensatedSum::new(), 0usize);
    for p in prepared {
        for (trace, ids) in [
            (p.pair.chosen(), &p.chosen_ids),
            (p.pair.rejected(), &p.rejected_ids),
        ] {
            let lp = trace_logprobs(policy, ids)?;
            for (r, l) in trace.rewards().iter().zip(lp) {
                if *r > 0.0 {
                    good.0.add(l);
                    good.1 += 1;
                } else if *r < 0.0 {
                    poison.0.add(l);
                    poison.1 += 1;
                }
            }
        }
    }
    let mean = |(s, n): (numeric::CompensatedSum, usize)| {
        if n == 0 {
            f64::NAN
        } else {
            s.value() / n as f64
        }
    };
    Ok((mean(good), mean(poison)))
}

/// Plain gradient descent on the configured (masked) objective.
///
/// The reference policy is a frozen copy of `policy` at entry; policy
/// log-probabilities are recomputed from the live table every step. The loss
/// is averaged over pairs. Supported objectives: DPO and adaptive DPO,
/// rejection sampling and its adaptive form, and masked cross-entropy (on the
/// chosen trace).
pub fn train_adaptive(
    policy: &mut ToyPolicy,
    pairs: &[PairSample],
    cfg: &ObjectiveConfig,
    masking: Masking,
    lr: f64,
    steps: usize,
) -> Result<TrainReport> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "lr",
            reason: format!("learning rate must be finite and > 0, got {lr}"),
        });
    }
    if matches!(
        cfg.kind(),
        ObjectiveKind::PpoObjective | ObjectiveKind::AdaptivePpo
    ) {
        return Err(Error::UnsupportedObjective(cfg.kind().name()));
    }
    let reference = policy.clone();
    let prepared = pairs
        .iter()
        .map(|pair| {
            let chosen_ids = token_ids(pair.chosen(), policy.vocab_size)?;
            let rejected_ids = token_ids(pair.rejected(), policy.vocab_size)?;
            let ref_c = trace_logprobs(&reference, &chosen_ids)?;
            let ref_r = trace_logprobs(&reference, &rejected_ids)?;
            let chosen = pair.chosen().clone().with_logprobs(ref_c.clone(), ref_c)?;
            let rejected = pair
                .rejected()
                .clone()
                .with_logprobs(ref_r.clone(), ref_r)?;
            let masks = match (masking.mask_for(&chosen)?, masking.mask_for(&rejected)?) {
                (Some(c), Some(r)) => Some((c, r)),
                _ => None,
            };
            Ok(PreparedPair {
                pair: PairSample::new(chosen, rejected)?,
                chosen_ids,
                rejected_ids,
                masks,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = TrainReport {
        steps,
        mean_logprob_good: Vec::with_capacity(steps),
        mean_logprob_poison: Vec::with_capacity(steps),
        final_gap: 0.0,
    };
    let scale = 1.0 / prepared.len().max(1) as f64;
    let mut grad = vec![0.0; policy.logits.len()];
    for _ in 0..steps {
        grad.fill(0.0);
        for p in &prepared {
            let lp_c = trace_logprobs(policy, &p.chosen_ids)?;
            let lp_r = trace_logprobs(policy, &p.rejected_ids)?;
            let masks = p.masks.as_ref().map(|(c, r)| (c, r));
            let (g_chosen, g_rejected) = match cfg.kind() {
                ObjectiveKind::Dpo | ObjectiveKind::AdaptiveDpo => {
                    let live = p.pair.with_policy_logprobs(lp_c, lp_r)?;
                    let out = dpo_loss(&live, cfg, masks)?;
                    let split = p.chosen_ids.len();
                    let g = out.grad_wrt_logprob_policy;
                    (g[..split].to_vec(), g[split..].to_vec())
                }
                ObjectiveKind::RejectionSampling | ObjectiveKind::AdaptiveRs => {
                    let live = p.pair.chosen().clone().with_policy_logprobs(lp_c)?;
                    let out = rejection_sampling_loss(&live, cfg, masks.map(|m| m.0))?;
                    (out.grad_wrt_logprob_policy, vec![0.0; p.rejected_ids.len()])
                }
                ObjectiveKind::MaskedCe => {
                    let ones = MaskVector::ones(lp_c.len());
                    let out = masked_ce(&lp_c, masks.map_or(&ones, |m| m.0))?;
                    (out.grad_wrt_logprob_policy, vec![0.0; p.rejected_ids.len()])
                }
                ObjectiveKind::PpoObjective | ObjectiveKind::AdaptivePpo => unreachable!(),
            };
            accumulate_logit_grad(policy, &p.chosen_ids, &g_chosen, scale, &mut grad);
            accumulate_logit_grad(policy, &p.rejected_ids, &g_rejected, scale, &mut grad);
        }
        for (w, g) in policy.logits.iter_mut().zip(&grad) {
            *w -= lr * g;
        }
        let (good, poison) = token_class_means(policy, &prepared)?;
        report.mean_logprob_good.push(good);
        report.mean_logprob_poison.push(poison);
    }
    let (good, poison) = token_class_means(policy, &prepared)?;
    report.final_gap = good - poison;
    Ok(report)
}

/// Chain rule from per-token log-probability gradients to the logit table:
/// `d log p(y | ctx) / d logit[ctx][v] = 1[v == y] - p(v | ctx)`.
fn accumulate_logit_grad(
    policy: &ToyPolicy,
    tokens: &[usize],
    grad_lp: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    let v = policy.vocab_size;
    for (t, &g) in grad_lp.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let ctx = policy.context_at(tokens, t);
        let lp = policy.log_probs(ctx);
        let row = &mut out[ctx * v..(ctx + 1) * v];
        for (u, slot) in row.iter_mut().enumerate() {
            let indicator = if u == tokens[t] { 1.0 } else { 0.0 };
            *slot += scale * g * (indicator - lp[u].exp());
        }
    }
}

/// Synthetic preference data with a contiguous poison span in every chosen
/// sequence.
///
/// The vocabulary is split in half: tokens `0..V/2` are good, `V/2..V` are
/// bad. A chosen sequence is good tokens (reward `good_reward`) with one span
/// of bad tokens (reward `poison_reward`). A rejected sequence mirrors it: bad
/// tokens with reward `-good_reward` and one span of good tokens with reward
/// `-poison_reward`. Sequence rewards carry the preference outcome:
/// `good_reward` for chosen and `-good_reward` for rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskConfig {
    pub vocab_size: usize,
    pub sequence_length: usize,
    pub poison_fraction: f64,
    pub poison_reward: f64,
    pub good_reward: f64,
    pub num_pairs: usize,
    pub seed: u64,
    /// Markov order of the policy trained on the task.
    #[serde(default = "default_context_order")]
    pub context_order: usize,
}

fn default_context_order() -> usize {
    1
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        Self {
            vocab_size: 8,
            sequence_length: 32,
            poison_fraction: 0.2,
            poison_reward: -1.0,
            good_reward: 1.0,
            num_pairs: 64,
            seed: 7,
            context_order: 1,
        }
    }
}

impl SyntheticTaskConfig {
    fn validate(&self) -> Result<()> {
        let invalid = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_owned(),
            })
        };
        if self.vocab_size < 2 {
            return invalid("vocab_size", "must be at least 2");
        }
        if self.sequence_length == 0 {
            return invalid("sequence_length", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.poison_fraction) {
            return invalid("poison_fraction", "must lie in [0, 1]");
        }
        if self.poison_fraction > 0.0 && self.span_len() == 0 {
            return invalid("poison_fraction", "rounds to an empty poison span");
        }
        if !(self.poison_reward < 0.0 && self.poison_reward.is_finite()) {
            return invalid("poison_reward", "must be finite and < 0");
        }
        if !(self.good_reward > 0.0 && self.good_reward.is_finite()) {
            return invalid("good_reward", "must be finite and > 0");
        }
        if self.num_pairs == 0 {
            return invalid("num_pairs", "must be at least 1");
        }
        Ok(())
    }

    /// Poison span length, `round(poison_fraction * N)`.
    pub fn span_len(&self) -> usize {
        (self.poison_fraction * self.sequence_length as f64).round() as usize
    }

    /// Generates the pairs; log-probabilities are those of the uniform policy.
    pub fn generate_pairs(&self) -> Result<Vec<PairSample>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.sequence_length;
        let half = self.vocab_size / 2;
        let span = self.span_len();
        let uniform_lp = vec![-(self.vocab_size as f64).ln(); n];
        let sample = |class: SampleClass, rng: &mut ChaCha8Rng| -> Result<TokenRewardTrace> {
            let start = rng.gen_range(0..=n - span);
            let (body, body_reward, spot, spot_reward, outcome) = match class {
                SampleClass::Chosen => (
                    0..half,
                    self.good_reward,
                    half..self.vocab_size,
                    self.poison_reward,
                    self.good_reward,
                ),
                SampleClass::Rejected => (
                    half..self.vocab_size,
                    -self.good_reward,
                    0..half,
                    -self.poison_reward,
                    -self.good_reward,
                ),
            };
            let mut tokens = Vec::with_capacity(n);
            let mut rewards = Vec::with_capacity(n);
            for t in 0..n {
                if (start..start + span).contains(&t) {
                    tokens.push(Token::Id(rng.gen_range(spot.clone()) as i64));
                    rewards.push(spot_reward);
                } else {
                    tokens.push(Token::Id(rng.gen_range(body.clone()) as i64));
                    rewards.push(body_reward);
                }
            }
            TokenRewardTrace::new("", class, tokens, rewards)?
                .with_sequence_reward(outcome)?
                .with_logprobs(uniform_lp.clone(), uniform_lp.clone())
        };
        (0..self.num_pairs)
            .map(|i| {
                let id = format!("pair-{i}");
                let chosen = sample(SampleClass::Chosen, &mut rng)?.with_prompt_id(id.clone());
                let rejected = sample(SampleClass::Rejected, &mut rng)?.with_prompt_id(id);
                PairSample::new(chosen, rejected)
            })
            .collect()
    }
}

/// Trains a sign-consistent-masked arm and an unmasked arm from the same
/// initial policy on the same synthetic pairs. Returns `(masked, unmasked)`.
pub fn poison_span_experiment(
    task: &SyntheticTaskConfig,
    cfg: &ObjectiveConfig,
    lr: f64,
    steps: usize,
) -> Result<(TrainReport, TrainReport)> {
    let pairs = task.generate_pairs()?;
    let initial = init_policy(task.vocab_size, task.context_order, task.seed)?;
    let mut masked_policy = initial.clone();
    let masked = train_adaptive(
        &mut masked_policy,
        &pairs,
        cfg,
        Masking::sign_consistent(),
        lr,
        steps,
    )?;
    let mut plain_policy = initial;
    let unmasked = train_adaptive(&mut plain_policy, &pairs, cfg, Masking::None, lr, steps)?;
    Ok((masked, unmasked))
}
