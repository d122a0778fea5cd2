//! Reward traces, preference pairs and masks.
//!
//! A trace is one sampled response with a reward per token. Traces are read
//! from and written to JSONL, one record per line:
//!
//! ```text
//! {"prompt_id": str, "class": "chosen"|"rejected", "tokens": [str|int],
//!  "rewards": [float], "logprob_policy": [float]|null,
//!  "logprob_ref": [float]|null, "sequence_reward": float|null}
//! ```
//!
//! A missing or null `sequence_reward` is filled with the sum of the token
//! rewards.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Opaque token identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Token {
    Id(i64),
    Text(String),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Id(id) => write!(f, "{id}"),
            Token::Text(text) => write!(f, "{text:?}"),
        }
    }
}

impl From<i64> for Token {
    fn from(id: i64) -> Self {
        Token::Id(id)
    }
}

impl From<&str> for Token {
    fn from(text: &str) -> Self {
        Token::Text(text.to_owned())
    }
}

/// Whether a sample was preferred or dispreferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleClass {
    Chosen,
    Rejected,
}

/// Wire form of a trace, exactly as it appears on one JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub prompt_id: String,
    pub class: SampleClass,
    pub tokens: Vec<Token>,
    pub rewards: Vec<f64>,
    #[serde(default)]
    pub logprob_policy: Option<Vec<f64>>,
    #[serde(default)]
    pub logprob_ref: Option<Vec<f64>>,
    #[serde(default)]
    pub sequence_reward: Option<f64>,
}

/// One sampled response with per-token rewards.
///
/// Immutable after construction; every constructor validates that all
/// sequences share one length `N >= 1`, rewards are finite and
/// log-probabilities are finite and non-positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenRewardTrace {
    prompt_id: String,
    sample_class: SampleClass,
    tokens: Vec<Token>,
    rewards: Vec<f64>,
    logprob_policy: Option<Vec<f64>>,
    logprob_ref: Option<Vec<f64>>,
    sequence_reward: f64,
}

impl TokenRewardTrace {
    /// Builds a trace without log-probabilities; the sequence reward is the
    /// sum of `rewards`.
    pub fn new(
        prompt_id: impl Into<String>,
        sample_class: SampleClass,
        tokens: Vec<Token>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        Self::try_from(TraceRecord {
            prompt_id: prompt_id.into(),
            class: sample_class,
            tokens,
            rewards,
            logprob_policy: None,
            logprob_ref: None,
            sequence_reward: None,
        })
    }

    /// Trace with integer tokens `0..N` and the given rewards.
    pub fn from_rewards(sample_class: SampleClass, rewards: &[f64]) -> Result<Self> {
        let tokens = (0..rewards.len() as i64).map(Token::Id).collect();
        Self::new("", sample_class, tokens, rewards.to_vec())
    }

    /// Attaches policy and reference log-probabilities.
    pub fn with_logprobs(mut self, policy: Vec<f64>, reference: Vec<f64>) -> Result<Self> {
        check_logprobs("logprob_policy", &policy, self.len())?;
        check_logprobs("logprob_ref", &reference, self.len())?;
        self.logprob_policy = Some(policy);
        self.logprob_ref = Some(reference);
        Ok(self)
    }

    /// Replaces the policy log-probabilities, keeping everything else.
    pub fn with_policy_logprobs(mut self, policy: Vec<f64>) -> Result<Self> {
        check_logprobs("logprob_policy", &policy, self.len())?;
        self.logprob_policy = Some(policy);
        Ok(self)
    }

    pub fn with_sequence_reward(mut self, sequence_reward: f64) -> Result<Self> {
        if !sequence_reward.is_finite() {
            return Err(Error::MalformedRecord(
                "sequence_reward must be finite".to_owned(),
            ));
        }
        self.sequence_reward = sequence_reward;
        Ok(self)
    }

    pub fn with_prompt_id(mut self, prompt_id: impl Into<String>) -> Self {
        self.prompt_id = prompt_id.into();
        self
    }

    pub(crate) fn with_rewards(&self, rewards: Vec<f64>) -> Self {
        debug_assert_eq!(rewards.len(), self.len());
        Self {
            rewards,
            ..self.clone()
        }
    }

    pub fn prompt_id(&self) -> &str {
        &self.prompt_id
    }

    pub fn sample_class(&self) -> SampleClass {
        self.sample_class
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn logprob_policy(&self) -> Option<&[f64]> {
        self.logprob_policy.as_deref()
    }

    pub fn logprob_ref(&self) -> Option<&[f64]> {
        self.logprob_ref.as_deref()
    }

    pub fn sequence_reward(&self) -> f64 {
        self.sequence_reward
    }

    /// Number of tokens `N`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_record(&self) -> TraceRecord {
        TraceRecord {
            prompt_id: self.prompt_id.clone(),
            class: self.sample_class,
            tokens: self.tokens.clone(),
            rewards: self.rewards.clone(),
            logprob_policy: self.logprob_policy.clone(),
            logprob_ref: self.logprob_ref.clone(),
            sequence_reward: Some(self.sequence_reward),
        }
    }

    /// Serializes the trace as one JSONL line (without the trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("trace records always serialize")
    }
}

impl TryFrom<TraceRecord> for TokenRewardTrace {
    type Error = Error;

    fn try_from(record: TraceRecord) -> Result<Self> {
        let n = record.tokens.len();
        if n == 0 {
            return Err(Error::EmptyTrace);
        }
        if record.rewards.len() != n {
            return Err(Error::LengthMismatch {
                field: "rewards",
                expected: n,
                found: record.rewards.len(),
            });
        }
        if let Some(index) = record.rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::NonFiniteReward { index });
        }
        if let Some(lp) = &record.logprob_policy {
            check_logprobs("logprob_policy", lp, n)?;
        }
        if let Some(lp) = &record.logprob_ref {
            check_logprobs("logprob_ref", lp, n)?;
        }
        let sequence_reward = match record.sequence_reward {
            Some(r) if !r.is_finite() => {
                return Err(Error::MalformedRecord(
                    "sequence_reward must be finite".to_owned(),
                ))
            }
            Some(r) => r,
            None => numeric::sum(record.rewards.iter().copied()),
        };
        Ok(Self {
            prompt_id: record.prompt_id,
            sample_class: record.class,
            tokens: record.tokens,
            rewards: record.rewards,
            logprob_policy: record.logprob_policy,
            logprob_ref: record.logprob_ref,
            sequence_reward,
        })
    }
}

fn check_logprobs(field: &'static str, values: &[f64], n: usize) -> Result<()> {
    if values.len() != n {
        return Err(Error::LengthMismatch {
            field,
            expected: n,
            found: values.len(),
        });
    }
    match values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v > 0.0)
    {
        Some((index, &value)) => Err(Error::InvalidLogprob {
            field,
            index,
            value,
        }),
        None => Ok(()),
    }
}

/// Parses and validates one JSONL trace record.
pub fn parse_trace(record: &str) -> Result<TokenRewardTrace> {
    let record: TraceRecord =
        serde_json::from_str(record).map_err(|e| Error::MalformedRecord(e.to_string()))?;
    TokenRewardTrace::try_from(record)
}

/// A chosen/rejected pair for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    prompt_id: String,
    chosen: TokenRewardTrace,
    rejected: TokenRewardTrace,
}

impl PairSample {
    /// Both traces must share a prompt, carry the right classes and include
    /// policy and reference log-probabilities.
    pub fn new(chosen: TokenRewardTrace, rejected: TokenRewardTrace) -> Result<Self> {
        if chosen.sample_class() != SampleClass::Chosen {
            return Err(Error::PairMismatch("first trace is not chosen".to_owned()));
        }
        if rejected.sample_class() != SampleClass::Rejected {
            return Err(Error::PairMismatch(
                "second trace is not rejected".to_owned(),
            ));
        }
        if chosen.prompt_id() != rejected.prompt_id() {
            return Err(Error::PairMismatch(format!(
                "prompt ids differ: {:?} vs {:?}",
                chosen.prompt_id(),
                rejected.prompt_id()
            )));
        }
        for trace in [&chosen, &rejected] {
            if trace.logprob_policy().is_none() {
                return Err(Error::MissingLogprobs("logprob_policy"));
            }
            if trace.logprob_ref().is_none() {
                return Err(Error::MissingLogprobs("logprob_ref"));
            }
        }
        Ok(Self {
            prompt_id: chosen.prompt_id().to_owned(),
            chosen,
            rejected,
        })
    }

    pub fn prompt_id(&self) -> &str {
        &self.prompt_id
    }

    pub fn chosen(&self) -> &TokenRewardTrace {
        &self.chosen
    }

    pub fn rejected(&self) -> &TokenRewardTrace {
        &self.rejected
    }

    /// Same pair with both policy log-probability vectors replaced.
    pub fn with_policy_logprobs(&self, chosen: Vec<f64>, rejected: Vec<f64>) -> Result<Self> {
        Ok(Self {
            prompt_id: self.prompt_id.clone(),
            chosen: self.chosen.clone().with_policy_logprobs(chosen)?,
            rejected: self.rejected.clone().with_policy_logprobs(rejected)?,
        })
    }
}

/// Groups traces into pairs by `prompt_id`, in order of first appearance.
///
/// Every prompt must have exactly one chosen and one rejected trace.
pub fn pair_traces(traces: Vec<TokenRewardTrace>) -> Result<Vec<PairSample>> {
    let mut order: Vec<String> = Vec::new();
    let mut slots: HashMap<String, (Option<TokenRewardTrace>, Option<TokenRewardTrace>)> =
        HashMap::new();
    for trace in traces {
        let key = trace.prompt_id().to_owned();
        let slot = slots.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            (None, None)
        });
        let target = match trace.sample_class() {
            SampleClass::Chosen => &mut slot.0,
            SampleClass::Rejected => &mut slot.1,
        };
        if target.is_some() {
            return Err(Error::PairMismatch(format!(
                "prompt {key:?} has more than one {:?} trace",
                trace.sample_class()
            )));
        }
        *target = Some(trace);
    }
    order
        .into_iter()
        .map(|key| match slots.remove(&key) {
            Some((Some(chosen), Some(rejected))) => PairSample::new(chosen, rejected),
            _ => Err(Error::PairMismatch(format!(
                "prompt {key:?} lacks a chosen or rejected trace"
            ))),
        })
        .collect()
}

/// Binary masks gate loss terms; ternary masks carry a classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    Binary,
    Ternary,
}

/// Per-token mask values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskVector {
    values: Vec<i8>,
    mode: MaskMode,
}

impl MaskVector {
    pub fn binary(values: Vec<i8>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0..=1).contains(*v))
        {
            return Err(Error::InvalidMaskValue {
                index,
                value,
                mode: "binary",
            });
        }
        Ok(Self {
            values,
            mode: MaskMode::Binary,
        })
    }

    pub fn ternary(values: Vec<i8>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(-1..=1).contains(*v))
        {
            return Err(Error::InvalidMaskValue {
                index,
                value,
                mode: "ternary",
            });
        }
        Ok(Self {
            values,
            mode: MaskMode::Ternary,
        })
    }

    pub(crate) fn from_bools(keep: impl IntoIterator<Item = bool>) -> Self {
        Self {
            values: keep.into_iter().map(i8::from).collect(),
            mode: MaskMode::Binary,
        }
    }

    pub fn ones(len: usize) -> Self {
        Self {
            values: vec![1; len],
            mode: MaskMode::Binary,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0; len],
            mode: MaskMode::Binary,
        }
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of non-zero entries.
    pub fn active_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    /// Binary complement. Ternary masks are returned unchanged in shape but
    /// with signs flipped.
    pub fn complement(&self) -> Self {
        let values = match self.mode {
            MaskMode::Binary => self.values.iter().map(|v| 1 - v).collect(),
            MaskMode::Ternary => self.values.iter().map(|v| -v).collect(),
        };
        Self {
            values,
            mode: self.mode,
        }
    }

    /// Mask values as loss weights (`0.0` or `1.0` for binary masks).
    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|&v| f64::from(v))
    }
}

/// Whitening scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WhitenScope {
    /// Standardize each trace on its own statistics.
    PerTrace,
    /// Standardize all traces with statistics pooled over every token.
    #[default]
    Corpus,
}

/// Result of [`whiten_rewards`].
#[derive(Debug, Clone, PartialEq)]
pub struct Whitened {
    pub traces: Vec<TokenRewardTrace>,
    /// Per trace: `true` when its scope had zero variance and rewards were
    /// set to zero.
    pub degenerate: Vec<bool>,
}

impl Whitened {
    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

/// Standardizes rewards to mean 0 and population variance 1 within `scope`.
///
/// A scope with zero variance yields all-zero rewards and is flagged in
/// [`Whitened::degenerate`]. Only rewards change; the stored sequence reward
/// is left as is.
pub fn whiten_rewards(traces: &[TokenRewardTrace], scope: WhitenScope) -> Result<Whitened> {
    if traces.is_empty() {
        return Err(Error::EmptyInput);
    }
    match scope {
        WhitenScope::PerTrace => {
            let (traces, degenerate) = traces
                .iter()
                .map(|trace| {
                    let stats = Moments::of(trace.rewards().iter().copied());
                    (
                        trace.with_rewards(stats.standardize(trace.rewards())),
                        stats.degenerate(),
                    )
                })
                .unzip();
            Ok(Whitened { traces, degenerate })
        }
        WhitenScope::Corpus => {
            let stats = Moments::of(traces.iter().flat_map(|t| t.rewards().iter().copied()));
            Ok(Whitened {
                traces: traces
                    .iter()
                    .map(|t| t.with_rewards(stats.standardize(t.rewards())))
                    .collect(),
                degenerate: vec![stats.degenerate(); traces.len()],
            })
        }
    }
}

struct Moments {
    mean: f64,
    std: f64,
    max_abs: f64,
}

impl Moments {
    fn of<I: Iterator<Item = f64> + Clone>(values: I) -> Self {
        let mut count = 0usize;
        let mut max_abs = 0f64;
        let mut acc = numeric::CompensatedSum::new();
        for v in values.clone() {
            count += 1;
            max_abs = max_abs.max(v.abs());
            acc.add(v);
        }
        let mean = acc.value() / count as f64;
        let var = numeric::sum(values.map(|v| (v - mean) * (v - mean))) / count as f64;
        Self {
            mean,
            std: var.sqrt(),
            max_abs,
        }
    }

    // Spread below rounding noise of the values counts as constant.
    fn degenerate(&self) -> bool {
        self.std <= f64::EPSILON * self.max_abs || self.std == 0.0
    }

    fn standardize(&self, values: &[f64]) -> Vec<f64> {
        if self.degenerate() {
            vec![0.0; values.len()]
        } else {
            values.iter().map(|v| (v - self.mean) / self.std).collect()
        }
    }
}

/// How token rewards collapse to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    #[default]
    Sum,
    Mean,
    Last,
}

/// Aggregates the token rewards of a trace.
pub fn aggregate_reward(trace: &TokenRewardTrace, mode: AggregateMode) -> f64 {
    aggregate_slice(trace.rewards(), mode)
}

pub(crate) fn aggregate_slice(rewards: &[f64], mode: AggregateMode) -> f64 {
    match mode {
        AggregateMode::Sum => numeric::sum(rewards.iter().copied()),
        AggregateMode::Mean => numeric::sum(rewards.iter().copied()) / rewards.len() as f64,
        AggregateMode::Last => *rewards.last().expect("traces are non-empty"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chosen(rewards: &[f64]) -> TokenRewardTrace {
        TokenRewardTrace::from_rewards(SampleClass::Chosen, rewards).unwrap()
    }

    #[test]
    fn parses_minimal_record() {
        let line = r#"{"prompt_id":"p","class":"chosen","tokens":["a","b"],"rewards":[0.5,-0.5],"logprob_policy":null,"logprob_ref":null,"sequence_reward":0.0}"#;
        let trace = parse_trace(line).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.sample_class(), SampleClass::Chosen);
        assert_eq!(trace.tokens()[0], Token::from("a"));
        assert_eq!(trace.sequence_reward(), 0.0);
    }

    #[test]
    fn missing_sequence_reward_defaults_to_sum() {
        let line = r#"{"prompt_id":"p","class":"rejected","tokens":[1,2,3],"rewards":[1,2,3.5]}"#;
        let trace = parse_trace(line).unwrap();
        assert_eq!(trace.sequence_reward(), 6.5);
        assert_eq!(trace.tokens()[2], Token::Id(3));
    }

    #[test]
    fn length_mismatch_is_reported_with_field() {
        let line = r#"{"prompt_id":"p","class":"chosen","tokens":["a","b","c"],"rewards":[1,2]}"#;
        let err = parse_trace(line).unwrap_err();
        assert_eq!(
            err,
            Error::LengthMismatch {
                field: "rewards",
                expected: 3,
                found: 2
            }
        );
        assert_eq!(err.field(), Some("rewards"));
    }

    #[test]
    fn nan_reward_is_rejected() {
        // JSON has no NaN literal, so go through the record type.
        let record = TraceRecord {
            prompt_id: "p".into(),
            class: SampleClass::Chosen,
            tokens: vec![Token::Id(0), Token::Id(1)],
            rewards: vec![0.0, f64::NAN],
            logprob_policy: None,
            logprob_ref: None,
            sequence_reward: None,
        };
        assert_eq!(
            TokenRewardTrace::try_from(record).unwrap_err(),
            Error::NonFiniteReward { index: 1 }
        );
    }

    #[test]
    fn malformed_json_and_bad_logprobs() {
        assert!(matches!(
            parse_trace("{not json").unwrap_err(),
            Error::MalformedRecord(_)
        ));
        assert!(matches!(
            parse_trace(r#"{"prompt_id":"p","class":"maybe","tokens":[1],"rewards":[1]}"#)
                .unwrap_err(),
            Error::MalformedRecord(_)
        ));
        let line = r#"{"prompt_id":"p","class":"chosen","tokens":[1],"rewards":[1],"logprob_policy":[0.1],"logprob_ref":[-1]}"#;
        assert!(matches!(
            parse_trace(line).unwrap_err(),
            Error::InvalidLogprob {
                field: "logprob_policy",
                index: 0,
                ..
            }
        ));
        let empty = r#"{"prompt_id":"p","class":"chosen","tokens":[],"rewards":[]}"#;
        assert_eq!(parse_trace(empty).unwrap_err(), Error::EmptyTrace);
    }

    #[test]
    fn whiten_per_trace() {
        let out = whiten_rewards(&[chosen(&[1.0, 2.0, 3.0])], WhitenScope::PerTrace).unwrap();
        let r = out.traces[0].rewards();
        let expected = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(!out.any_degenerate());
    }

    #[test]
    fn whiten_constant_trace_is_flagged() {
        let out = whiten_rewards(&[chosen(&[5.0, 5.0, 5.0])], WhitenScope::PerTrace).unwrap();
        assert_eq!(out.traces[0].rewards(), &[0.0, 0.0, 0.0]);
        assert_eq!(out.degenerate, vec![true]);
        let out = whiten_rewards(&[chosen(&[0.1, 0.1, 0.1])], WhitenScope::Corpus).unwrap();
        assert_eq!(out.traces[0].rewards(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn whiten_corpus_two_point() {
        let out = whiten_rewards(
            &[chosen(&[0.0, 0.0]), chosen(&[2.0, 2.0])],
            WhitenScope::Corpus,
        )
        .unwrap();
        assert_eq!(out.traces[0].rewards(), &[-1.0, -1.0]);
        assert_eq!(out.traces[1].rewards(), &[1.0, 1.0]);
        assert_eq!(out.degenerate, vec![false, false]);
        // other fields untouched
        assert_eq!(out.traces[1].sequence_reward(), 4.0);
    }

    #[test]
    fn whiten_empty_input() {
        assert_eq!(
            whiten_rewards(&[], WhitenScope::Corpus).unwrap_err(),
            Error::EmptyInput
        );
    }

    #[test]
    fn aggregates() {
        let t = chosen(&[1.0, 2.0, 3.0]);
        assert_eq!(aggregate_reward(&t, AggregateMode::Sum), 6.0);
        assert_eq!(aggregate_reward(&t, AggregateMode::Mean), 2.0);
        assert_eq!(aggregate_reward(&t, AggregateMode::Last), 3.0);
    }

    #[test]
    fn masks_validate_values() {
        assert!(MaskVector::binary(vec![0, 1, -1]).is_err());
        assert!(MaskVector::ternary(vec![0, 1, -1]).is_ok());
        assert!(MaskVector::ternary(vec![2]).is_err());
        assert_eq!(
            MaskVector::binary(vec![1, 0])
                .unwrap()
                .complement()
                .values(),
            &[0, 1]
        );
    }

    #[test]
    fn pairing_groups_by_prompt() {
        let lp = vec![-1.0; 2];
        let mk = |id: &str, class| {
            TokenRewardTrace::from_rewards(class, &[1.0, 2.0])
                .unwrap()
                .with_prompt_id(id)
                .with_logprobs(lp.clone(), lp.clone())
                .unwrap()
        };
        let pairs = pair_traces(vec![
            mk("a", SampleClass::Rejected),
            mk("b", SampleClass::Chosen),
            mk("a", SampleClass::Chosen),
            mk("b", SampleClass::Rejected),
        ])
        .unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].prompt_id(), "a");
        assert!(pair_traces(vec![mk("a", SampleClass::Chosen)]).is_err());
        let no_lp = TokenRewardTrace::from_rewards(SampleClass::Chosen, &[1.0]).unwrap();
        let rej = TokenRewardTrace::from_rewards(SampleClass::Rejected, &[1.0]).unwrap();
        assert_eq!(
            PairSample::new(no_lp, rej).unwrap_err(),
            Error::MissingLogprobs("logprob_policy")
        );
    }
}
