//! Adaptive segment-level reward toolkit.
//!
//! Per-token reward traces are split into segments (pivot detection,
//! Schmitt-trigger classification), turned into loss masks, scored under
//! masked preference objectives with checked gradients, and analysed under a
//! within-segment squared error plus per-segment noise penalty model. The
//! [`error_model`] module contains an exact optimal segmenter for that
//! objective together with an exhaustive reference search.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`trace`]: data model, JSONL ingestion, whitening, reward aggregation
//! - [`segmentation`]: token classification, segments, masks, baselines
//! - [`error_model`]: sequence/noise/total error and optimal segmentation
//! - [`objectives`]: masked CE, DPO, PPO-style and rejection-sampling losses
//! - [`toy_policy`]: a tabular autoregressive policy and training loop
//! - [`reward_sim`]: noisy trace simulation and error studies

pub mod error;
pub mod error_model;
pub mod numeric;
pub mod objectives;
pub mod reward_sim;
pub mod segmentation;
pub mod toy_policy;
pub mod trace;

pub use error::{Error, Result};
pub use error_model::{
    brute_force_segmentation, optimal_segmentation, sequence_error, token_noise_error, total_error,
    ErrorReport,
};
pub use objectives::{
    check_gradients, dpo_loss, masked_ce, ppo_objective, preference_prob, rejection_sampling_loss,
    GradCheckReport, LossBreakdown, ObjectiveConfig, ObjectiveKind,
};
pub use reward_sim::{error_study, generate_trace, SimConfig, StudyReport};
pub use segmentation::{
    adaptive_mask, classify_rewards, classify_tokens, count_transitions, default_pivot_threshold,
    detect_pivots, estimate_baseline, segments_from_labels, segments_from_pivots,
    sign_consistent_mask, BaselineMode, InitialState, Label, SchmittConfig, SchmittMode, Segment,
    SegmentAggregate, Segmentation,
};
pub use toy_policy::{
    init_policy, poison_span_experiment, trace_logprobs, train_adaptive, Masking,
    SyntheticTaskConfig, ToyPolicy, TrainReport,
};
pub use trace::{
    aggregate_reward, pair_traces, parse_trace, whiten_rewards, AggregateMode, MaskMode,
    MaskVector, PairSample, SampleClass, Token, TokenRewardTrace, WhitenScope, Whitened,
};

/// Crate version string.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
