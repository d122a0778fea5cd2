//! Token classification, segmentation and loss masks.
//!
//! Rewards are classified against a baseline `b` with a dead band
//! `[b - delta, b + delta]`. In [`SchmittMode::DeadZone`] a token inside the
//! band is neutral. In [`SchmittMode::HysteresisCarryForward`] the previous
//! state is held through the band, so small wiggles around the baseline do not
//! flip the classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;
use crate::trace::{
    aggregate_slice, whiten_rewards, AggregateMode, MaskMode, MaskVector, SampleClass,
    TokenRewardTrace, WhitenScope,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchmittMode {
    #[default]
    DeadZone,
    HysteresisCarryForward,
}

/// State of the hysteresis machine before the first band exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// Leading in-band tokens stay neutral.
    #[default]
    Neutral,
    /// Leading in-band tokens take the sign of the first band exit.
    FromFirstExit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchmittConfig {
    baseline: f64,
    offset: f64,
    mode: SchmittMode,
    initial_state: InitialState,
}

impl Default for SchmittConfig {
    fn default() -> Self {
        Self {
            baseline: 0.0,
            offset: 0.0,
            mode: SchmittMode::DeadZone,
            initial_state: InitialState::Neutral,
        }
    }
}

impl SchmittConfig {
    pub fn new(
        baseline: f64,
        offset: f64,
        mode: SchmittMode,
        initial_state: InitialState,
    ) -> Result<Self> {
        if !baseline.is_finite() {
            return Err(Error::InvalidParameter {
                name: "b",
                reason: "baseline must be finite".to_owned(),
            });
        }
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("offset must be finite and >= 0, got {offset}"),
            });
        }
        Ok(Self {
            baseline,
            offset,
            mode,
            initial_state,
        })
    }

    pub fn dead_zone(baseline: f64, offset: f64) -> Result<Self> {
        Self::new(
            baseline,
            offset,
            SchmittMode::DeadZone,
            InitialState::Neutral,
        )
    }

    pub fn hysteresis(baseline: f64, offset: f64, initial_state: InitialState) -> Result<Self> {
        Self::new(
            baseline,
            offset,
            SchmittMode::HysteresisCarryForward,
            initial_state,
        )
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn mode(&self) -> SchmittMode {
        self.mode
    }

    pub fn initial_state(&self) -> InitialState {
        self.initial_state
    }

    /// `+1` above the band, `-1` below it, `0` inside (boundaries included).
    #[inline]
    pub fn band(&self, reward: f64) -> i8 {
        if reward > self.baseline + self.offset {
            1
        } else if reward < self.baseline - self.offset {
            -1
        } else {
            0
        }
    }
}

/// Classifies every token of a trace into `{-1, 0, +1}`.
pub fn classify_tokens(trace: &TokenRewardTrace, cfg: &SchmittConfig) -> MaskVector {
    MaskVector::ternary(classify_rewards(trace.rewards(), cfg))
        .expect("classification only yields -1, 0, 1")
}

/// Slice form of [`classify_tokens`].
pub fn classify_rewards(rewards: &[f64], cfg: &SchmittConfig) -> Vec<i8> {
    match cfg.mode {
        SchmittMode::DeadZone => rewards.iter().map(|&r| cfg.band(r)).collect(),
        SchmittMode::HysteresisCarryForward => {
            let mut state = 0i8;
            let mut labels: Vec<i8> = rewards
                .iter()
                .map(|&r| {
                    let exit = cfg.band(r);
                    if exit != 0 {
                        state = exit;
                    }
                    state
                })
                .collect();
            if cfg.initial_state == InitialState::FromFirstExit {
                if let Some(first) = labels.iter().position(|&l| l != 0) {
                    let sign = labels[first];
                    labels[..first].fill(sign);
                }
            }
            labels
        }
    }
}

/// Number of label changes between consecutive tokens, not counting the
/// switch out of a leading neutral run.
pub fn count_transitions(labels: &[i8]) -> usize {
    let start = labels.iter().position(|&l| l != 0).unwrap_or(labels.len());
    labels[start..].windows(2).filter(|w| w[0] != w[1]).count()
}

/// Indices `t >= 1` where `|r_t - r_{t-1}| > tau`, ascending.
pub fn detect_pivots(trace: &TokenRewardTrace, tau: f64) -> Result<Vec<usize>> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::NegativeThreshold(tau));
    }
    Ok(trace
        .rewards()
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1] - w[0]).abs() > tau)
        .map(|(i, _)| i + 1)
        .collect())
}

/// Default pivot threshold: the population standard deviation of first
/// differences of corpus-whitened rewards. Zero when no trace has two tokens.
pub fn default_pivot_threshold(traces: &[TokenRewardTrace]) -> Result<f64> {
    let whitened = whiten_rewards(traces, WhitenScope::Corpus)?;
    let diffs: Vec<f64> = whitened
        .traces
        .iter()
        .flat_map(|t| {
            t.rewards()
                .windows(2)
                .map(|w| w[1] - w[0])
                .collect::<Vec<_>>()
        })
        .collect();
    if diffs.is_empty() {
        return Ok(0.0);
    }
    let n = diffs.len() as f64;
    let mean = numeric::sum(diffs.iter().copied()) / n;
    let var = numeric::sum(diffs.iter().map(|d| (d - mean) * (d - mean))) / n;
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "0")]
    Neutral,
    #[serde(rename = "-")]
    Negative,
}

impl Label {
    pub fn from_sign(sign: i8) -> Self {
        match sign.signum() {
            1 => Label::Positive,
            -1 => Label::Negative,
            _ => Label::Neutral,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Neutral => 0,
            Label::Negative => -1,
        }
    }
}

/// How a segment's reward `r_k` is taken from its tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentAggregate {
    #[default]
    Mean,
    Last,
}

impl From<SegmentAggregate> for AggregateMode {
    fn from(mode: SegmentAggregate) -> Self {
        match mode {
            SegmentAggregate::Mean => AggregateMode::Mean,
            SegmentAggregate::Last => AggregateMode::Last,
        }
    }
}

/// Contiguous token run `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub label: Label,
    pub aggregate_reward: f64,
    pub aggregate_mode: SegmentAggregate,
}

impl Segment {
    /// Segment over `start..=end` of `rewards` with its aggregate computed.
    pub fn over(
        rewards: &[f64],
        start: usize,
        end: usize,
        label: Label,
        aggregate_mode: SegmentAggregate,
    ) -> Self {
        Self {
            start,
            end,
            label,
            aggregate_reward: aggregate_slice(&rewards[start..=end], aggregate_mode.into()),
            aggregate_mode,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Ordered segments tiling `0..trace_length`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    segments: Vec<Segment>,
    trace_length: usize,
}

impl Segmentation {
    pub fn new(segments: Vec<Segment>, trace_length: usize) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::TilingViolation("no segments".to_owned()));
        }
        let mut next = 0usize;
        for (k, seg) in segments.iter().enumerate() {
            if seg.start != next || seg.end < seg.start {
                return Err(Error::TilingViolation(format!(
                    "segment {k} spans {}..={}, expected to start at {next}",
                    seg.start, seg.end
                )));
            }
            next = seg.end + 1;
        }
        if next != trace_length {
            return Err(Error::TilingViolation(format!(
                "segments cover {next} tokens, trace has {trace_length}"
            )));
        }
        Ok(Self {
            segments,
            trace_length,
        })
    }

    /// Builds a segmentation from segment start indices (first must be 0).
    ///
    /// Labels follow the sign of each segment's aggregate reward.
    pub fn from_starts(
        rewards: &[f64],
        starts: &[usize],
        aggregate_mode: SegmentAggregate,
    ) -> Result<Self> {
        let n = rewards.len();
        if starts.first() != Some(&0) {
            return Err(Error::TilingViolation(
                "first segment must start at 0".to_owned(),
            ));
        }
        let segments = starts
            .iter()
            .enumerate()
            .map(|(k, &start)| {
                let end = starts.get(k + 1).map_or(n, |&s| s).wrapping_sub(1);
                if end >= n || end < start {
                    return Err(Error::TilingViolation(format!(
                        "segment starts {starts:?} are not strictly increasing within 0..{n}"
                    )));
                }
                let mut seg = Segment::over(rewards, start, end, Label::Neutral, aggregate_mode);
                seg.label = Label::from_sign(sign_of(seg.aggregate_reward));
                Ok(seg)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(segments, n)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn trace_length(&self) -> usize {
        self.trace_length
    }

    /// Number of segments `K`.
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn starts(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.start).collect()
    }

    /// Per-token label signs.
    pub fn flatten_labels(&self) -> Vec<i8> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.label.sign(), s.len()))
            .collect()
    }

    /// Same boundaries, with every segment's `r_k` recomputed from `rewards`
    /// under `mode`.
    pub fn reaggregated(&self, rewards: &[f64], mode: SegmentAggregate) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| Segment::over(rewards, s.start, s.end, s.label, mode))
            .collect();
        Self {
            segments,
            trace_length: self.trace_length,
        }
    }
}

fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Groups maximal runs of equal label into segments.
pub fn segments_from_labels(
    labels: &MaskVector,
    trace: &TokenRewardTrace,
    aggregate_mode: SegmentAggregate,
) -> Result<Segmentation> {
    let values = labels.values();
    if values.len() != trace.len() {
        return Err(Error::LengthMismatch {
            field: "labels",
            expected: trace.len(),
            found: values.len(),
        });
    }
    let rewards = trace.rewards();
    let mut segments = Vec::new();
    let mut start = 0;
    for t in 1..=values.len() {
        if t == values.len() || values[t] != values[start] {
            segments.push(Segment::over(
                rewards,
                start,
                t - 1,
                Label::from_sign(values[start]),
                aggregate_mode,
            ));
            start = t;
        }
    }
    Segmentation::new(segments, trace.len())
}

/// Splits a trace at pivot indices and labels each piece by where its
/// aggregate reward falls relative to the dead band of `cfg`.
pub fn segments_from_pivots(
    trace: &TokenRewardTrace,
    pivots: &[usize],
    cfg: &SchmittConfig,
    aggregate_mode: SegmentAggregate,
) -> Result<Segmentation> {
    let mut starts = Vec::with_capacity(pivots.len() + 1);
    starts.push(0);
    starts.extend_from_slice(pivots);
    let seg = Segmentation::from_starts(trace.rewards(), &starts, aggregate_mode)?;
    let segments = seg
        .segments
        .into_iter()
        .map(|mut s| {
            s.label = Label::from_sign(cfg.band(s.aggregate_reward));
            s
        })
        .collect();
    Segmentation::new(segments, trace.len())
}

/// Per-token adaptive mask.
///
/// A token is kept when it sits in a chosen sample with reward above `b`, or
/// in a rejected sample with reward at or below `b`.
pub fn adaptive_mask(trace: &TokenRewardTrace, baseline: f64) -> MaskVector {
    adaptive_mask_rewards(trace.rewards(), trace.sample_class(), baseline)
}

/// Slice form of [`adaptive_mask`].
pub fn adaptive_mask_rewards(rewards: &[f64], class: SampleClass, baseline: f64) -> MaskVector {
    MaskVector::from_bools(rewards.iter().map(|&r| match class {
        SampleClass::Chosen => r > baseline,
        SampleClass::Rejected => r <= baseline,
    }))
}

/// Keeps segments whose reward sign (relative to `b`) matches the sign of the
/// whole sequence's reward. Neutral segments and zero signs are dropped.
pub fn sign_consistent_mask(
    segmentation: &Segmentation,
    trace: &TokenRewardTrace,
    baseline: f64,
) -> Result<MaskVector> {
    if segmentation.trace_length() != trace.len() {
        return Err(Error::TilingViolation(format!(
            "segmentation covers {} tokens, trace has {}",
            segmentation.trace_length(),
            trace.len()
        )));
    }
    let overall = sign_of(trace.sequence_reward() - baseline);
    let mut values = vec![0i8; trace.len()];
    for seg in segmentation.segments() {
        let local = sign_of(seg.aggregate_reward - baseline);
        if overall != 0 && local == overall && seg.label != Label::Neutral {
            values[seg.start..=seg.end].fill(1);
        }
    }
    MaskVector::binary(values)
}

/// How the baseline `b` is estimated from previously seen traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineMode {
    Fixed(f64),
    RunningMean,
    /// Linearly interpolated quantile, `q` in `[0, 1]`.
    Quantile(f64),
}

pub fn estimate_baseline(history: &[TokenRewardTrace], mode: BaselineMode) -> Result<f64> {
    let all = || history.iter().flat_map(|t| t.rewards().iter().copied());
    match mode {
        BaselineMode::Fixed(value) => Ok(value),
        BaselineMode::RunningMean => {
            let count = all().count();
            if count == 0 {
                return Err(Error::EmptyHistory);
            }
            Ok(numeric::sum(all()) / count as f64)
        }
        BaselineMode::Quantile(q) => {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidParameter {
                    name: "q",
                    reason: format!("quantile must lie in [0, 1], got {q}"),
                });
            }
            let mut sorted: Vec<f64> = all().collect();
            if sorted.is_empty() {
                return Err(Error::EmptyHistory);
            }
            sorted.sort_by(f64::total_cmp);
            let h = q * (sorted.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
        }
    }
}

/// JSONL output form of a segmentation and its mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationRecord {
    pub prompt_id: String,
    pub segments: Vec<SegmentRecord>,
    pub mask: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub start: usize,
    pub end: usize,
    pub label: Label,
    pub r_k: f64,
}

impl SegmentationRecord {
    pub fn new(prompt_id: &str, segmentation: &Segmentation, mask: &MaskVector) -> Self {
        debug_assert!(mask.mode() == MaskMode::Binary || mask.mode() == MaskMode::Ternary);
        Self {
            prompt_id: prompt_id.to_owned(),
            segments: segmentation
                .segments()
                .iter()
                .map(|s| SegmentRecord {
                    start: s.start,
                    end: s.end,
                    label: s.label,
                    r_k: s.aggregate_reward,
                })
                .collect(),
            mask: mask.values().to_vec(),
        }
    }
}
