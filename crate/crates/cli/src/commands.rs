use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use segrew_core::segmentation::{SegmentRecord, SegmentationRecord};
use segrew_core::{
    adaptive_mask, classify_tokens, default_pivot_threshold, detect_pivots, dpo_loss, error_study,
    generate_trace, masked_ce, optimal_segmentation, poison_span_experiment, ppo_objective,
    rejection_sampling_loss, segments_from_labels, segments_from_pivots, sign_consistent_mask,
    ErrorReport, InitialState, LossBreakdown, MaskVector, ObjectiveConfig, ObjectiveKind,
    PairSample, SampleClass, SchmittConfig, SegmentAggregate, Segmentation, SimConfig,
    SyntheticTaskConfig, TokenRewardTrace, TrainReport,
};
use serde::Serialize;

use crate::args::*;
use crate::io::{collect_lines, diagnostic, jsonl, read_traces, write_output, Line};
use crate::CliError;

fn usage(err: impl std::fmt::Display) -> CliError {
    CliError::Usage(anyhow!("{err}"))
}

impl From<Aggregate> for SegmentAggregate {
    fn from(a: Aggregate) -> Self {
        match a {
            Aggregate::Mean => SegmentAggregate::Mean,
            Aggregate::Last => SegmentAggregate::Last,
        }
    }
}

/// How traces are cut into labelled segments.
enum Segmenter {
    Labels(SchmittConfig),
    Pivots { tau: f64, band: SchmittConfig },
}

impl Segmenter {
    fn from_args(args: &Schmitt, traces: &[Line<TokenRewardTrace>]) -> Result<Self, CliError> {
        let band = SchmittConfig::dead_zone(args.b, args.delta).map_err(usage)?;
        Ok(match args.mode {
            ClassifyMode::DeadZone => Segmenter::Labels(band),
            ClassifyMode::Hysteresis => {
                let initial = match args.initial {
                    Initial::Neutral => InitialState::Neutral,
                    Initial::FirstExit => InitialState::FromFirstExit,
                };
                Segmenter::Labels(
                    SchmittConfig::hysteresis(args.b, args.delta, initial).map_err(usage)?,
                )
            }
            ClassifyMode::Pivot => {
                let tau = if args.tau == "auto" {
                    let all: Vec<TokenRewardTrace> =
                        traces.iter().map(|l| l.value.clone()).collect();
                    default_pivot_threshold(&all).map_err(usage)?
                } else {
                    let tau: f64 = args.tau.parse().map_err(|_| {
                        usage(format!(
                            "--tau expects a number or `auto`, got `{}`",
                            args.tau
                        ))
                    })?;
                    if !(tau >= 0.0 && tau.is_finite()) {
                        return Err(usage(format!("--tau must be finite and >= 0, got {tau}")));
                    }
                    tau
                };
                Segmenter::Pivots { tau, band }
            }
        })
    }

    fn baseline(&self) -> f64 {
        match self {
            Segmenter::Labels(cfg) | Segmenter::Pivots { band: cfg, .. } => cfg.baseline(),
        }
    }

    fn segment(
        &self,
        trace: &TokenRewardTrace,
        mode: SegmentAggregate,
    ) -> segrew_core::Result<Segmentation> {
        match self {
            Segmenter::Labels(cfg) => {
                segments_from_labels(&classify_tokens(trace, cfg), trace, mode)
            }
            Segmenter::Pivots { tau, band } => {
                let pivots = detect_pivots(trace, *tau)?;
                segments_from_pivots(trace, &pivots, band, mode)
            }
        }
    }

    fn mask(&self, kind: MaskKind, trace: &TokenRewardTrace) -> segrew_core::Result<MaskVector> {
        match kind {
            MaskKind::Adaptive => Ok(adaptive_mask(trace, self.baseline())),
            MaskKind::SignConsistent => {
                let seg = self.segment(trace, SegmentAggregate::Mean)?;
                sign_consistent_mask(&seg, trace, self.baseline())
            }
        }
    }
}

/// Applies `f` to every line in parallel, keeping input order.
fn per_line<T, F>(traces: &[Line<TokenRewardTrace>], f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(&TokenRewardTrace) -> segrew_core::Result<T> + Sync,
{
    let results = traces.par_iter().map(|l| (l.number, f(&l.value))).collect();
    collect_lines(results)
}

fn emit<T: Serialize>(path: Option<&Path>, records: &[T]) -> Result<(), CliError> {
    let bytes = jsonl(records).map_err(CliError::Io)?;
    write_output(path, &bytes).map_err(CliError::Io)
}

pub fn segment(args: &SegmentArgs) -> Result<(), CliError> {
    let traces = read_traces(&args.io.input)?;
    let segmenter = Segmenter::from_args(&args.schmitt, &traces)?;
    let records = per_line(&traces, |trace| {
        let seg = segmenter.segment(trace, args.aggregate.into())?;
        let labels = MaskVector::ternary(seg.flatten_labels())?;
        Ok(SegmentationRecord::new(trace.prompt_id(), &seg, &labels))
    })?;
    emit(args.io.output.as_deref(), &records)
}

#[derive(Serialize)]
struct MaskRecord {
    prompt_id: String,
    class: SampleClass,
    mask: Vec<i8>,
}

pub fn mask(args: &MaskArgs) -> Result<(), CliError> {
    let traces = read_traces(&args.io.input)?;
    let segmenter = Segmenter::from_args(&args.schmitt, &traces)?;
    let records = per_line(&traces, |trace| {
        Ok(MaskRecord {
            prompt_id: trace.prompt_id().to_owned(),
            class: trace.sample_class(),
            mask: segmenter.mask(args.kind, trace)?.values().to_vec(),
        })
    })?;
    emit(args.io.output.as_deref(), &records)
}

#[derive(Serialize)]
struct AnalyzeRecord {
    prompt_id: String,
    #[serde(flatten)]
    report: ErrorReport,
    segments: Vec<SegmentRecord>,
}

fn check_scale(c: f64) -> Result<(), CliError> {
    if c >= 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--c must be finite and >= 0, got {c}")))
    }
}

pub fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    check_scale(args.c)?;
    let traces = read_traces(&args.io.input)?;
    let records = per_line(&traces, |trace| {
        let (seg, report) = optimal_segmentation(trace, args.c, args.aggregate.into())?;
        let labels = MaskVector::ternary(seg.flatten_labels())?;
        Ok(AnalyzeRecord {
            prompt_id: trace.prompt_id().to_owned(),
            report,
            segments: SegmentationRecord::new(trace.prompt_id(), &seg, &labels).segments,
        })
    })?;
    emit(args.io.output.as_deref(), &records)
}

#[derive(Serialize)]
struct ScoreRecord {
    prompt_id: String,
    objective: ObjectiveKind,
    #[serde(flatten)]
    breakdown: LossBreakdown,
}

impl Objective {
    fn kind(self) -> ObjectiveKind {
        match self {
            Objective::MaskedCe => ObjectiveKind::MaskedCe,
            Objective::Dpo => ObjectiveKind::Dpo,
            Objective::AdaptiveDpo => ObjectiveKind::AdaptiveDpo,
            Objective::Ppo => ObjectiveKind::PpoObjective,
            Objective::AdaptivePpo => ObjectiveKind::AdaptivePpo,
            Objective::Rs => ObjectiveKind::RejectionSampling,
            Objective::AdaptiveRs => ObjectiveKind::AdaptiveRs,
        }
    }
}

/// Groups traces into pairs by prompt id, in order of first appearance.
/// Returns each pair with the line number of its later member.
fn pair_lines(traces: &[Line<TokenRewardTrace>]) -> Result<Vec<(usize, PairSample)>, CliError> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&Line<TokenRewardTrace>>> = HashMap::new();
    for line in traces {
        let id = line.value.prompt_id();
        groups
            .entry(id)
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(line);
    }
    let mut pairs = Vec::new();
    let mut bad = Vec::new();
    for id in order {
        let group = &groups[id];
        let find = |class| group.iter().find(|l| l.value.sample_class() == class);
        let last = group.last().expect("groups are non-empty");
        if group.len() != 2 {
            bad.push(format!(
                "line {}: field `prompt_id`: prompt `{id}` has {} records, expected one chosen and one rejected",
                last.number,
                group.len()
            ));
            continue;
        }
        match (find(SampleClass::Chosen), find(SampleClass::Rejected)) {
            (Some(c), Some(r)) => match PairSample::new(c.value.clone(), r.value.clone()) {
                Ok(pair) => pairs.push((last.number, pair)),
                Err(e) => bad.push(diagnostic(last.number, &e)),
            },
            _ => bad.push(format!(
                "line {}: field `class`: prompt `{id}` needs one chosen and one rejected record",
                last.number
            )),
        }
    }
    if bad.is_empty() {
        Ok(pairs)
    } else {
        Err(CliError::Invalid(bad))
    }
}

pub fn score(args: &ScoreArgs) -> Result<(), CliError> {
    let kind = args.objective.kind();
    let cfg = ObjectiveConfig::new(args.beta, kind).map_err(usage)?;
    let traces = read_traces(&args.io.input)?;
    let segmenter = Segmenter::from_args(&args.schmitt, &traces)?;
    let masked = kind.is_adaptive() || kind == ObjectiveKind::MaskedCe;
    let mask_for = |t: &TokenRewardTrace| -> segrew_core::Result<Option<MaskVector>> {
        if masked {
            segmenter.mask(args.masking, t).map(Some)
        } else {
            Ok(None)
        }
    };

    let records = if kind.is_pairwise() {
        let pairs = pair_lines(&traces)?;
        let results = pairs
            .par_iter()
            .map(|(line, pair)| {
                let out = (|| {
                    let masks = match (mask_for(pair.chosen())?, mask_for(pair.rejected())?) {
                        (Some(c), Some(r)) => Some((c, r)),
                        _ => None,
                    };
                    let breakdown = dpo_loss(pair, &cfg, masks.as_ref().map(|(c, r)| (c, r)))?;
                    Ok(ScoreRecord {
                        prompt_id: pair.prompt_id().to_owned(),
                        objective: kind,
                        breakdown,
                    })
                })();
                (*line, out)
            })
            .collect();
        collect_lines(results)?
    } else {
        per_line(&traces, |trace| {
            let mask = mask_for(trace)?;
            let breakdown = match kind {
                ObjectiveKind::MaskedCe => {
                    let policy = trace
                        .logprob_policy()
                        .ok_or(segrew_core::Error::MissingLogprobs("logprob_policy"))?;
                    masked_ce(policy, mask.as_ref().expect("masked objective"))?
                }
                ObjectiveKind::PpoObjective | ObjectiveKind::AdaptivePpo => {
                    ppo_objective(trace, &cfg, mask.as_ref())?
                }
                _ => rejection_sampling_loss(trace, &cfg, mask.as_ref())?,
            };
            Ok(ScoreRecord {
                prompt_id: trace.prompt_id().to_owned(),
                objective: kind,
                breakdown,
            })
        })?
    };
    emit(args.io.output.as_deref(), &records)
}

fn parse_segments(text: &str) -> Result<Vec<(usize, f64)>, CliError> {
    text.split(',')
        .map(|part| {
            let (len, reward) = part
                .split_once(':')
                .ok_or_else(|| usage(format!("--segments: expected `len:reward`, got `{part}`")))?;
            let len = len
                .trim()
                .parse()
                .map_err(|_| usage(format!("--segments: bad length `{len}`")))?;
            let reward = reward
                .trim()
                .parse()
                .map_err(|_| usage(format!("--segments: bad reward `{reward}`")))?;
            Ok((len, reward))
        })
        .collect()
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    check_scale(args.c)?;
    let segments = parse_segments(&args.segments)?;
    let cfg = SimConfig::new(segments, args.sigma, args.trials, args.seed).map_err(usage)?;
    let report = error_study(&cfg, args.c).map_err(usage)?;
    if let Some(path) = &args.traces {
        let lines: Vec<String> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| generate_trace(&cfg, trial).map(|(t, _)| t.to_json_line()))
            .collect::<segrew_core::Result<_>>()
            .map_err(usage)?;
        let mut bytes = lines.join("\n").into_bytes();
        bytes.push(b'\n');
        write_output(Some(path), &bytes).map_err(CliError::Io)?;
    }
    emit(args.output.as_deref(), &[report])
}

#[derive(Serialize)]
struct ToyReport<'a> {
    task: &'a SyntheticTaskConfig,
    objective: ObjectiveKind,
    beta: f64,
    lr: f64,
    steps: usize,
    masked: TrainReport,
    unmasked: TrainReport,
}

#[derive(Serialize)]
struct CurveRow {
    step: usize,
    good_lp_masked: f64,
    poison_lp_masked: f64,
    good_lp_unmasked: f64,
    poison_lp_unmasked: f64,
}

pub fn train_toy(args: &TrainToyArgs) -> Result<(), CliError> {
    let mut task = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(CliError::Usage)?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::Invalid(vec![format!("{}: line {}: {e}", path.display(), e.line())])
            })?
        }
        None => SyntheticTaskConfig::default(),
    };
    macro_rules! override_field {
        ($($f:ident),*) => { $(if let Some(v) = args.$f { task.$f = v; })* };
    }
    override_field!(
        vocab_size,
        sequence_length,
        poison_fraction,
        num_pairs,
        context_order,
        seed
    );

    let kind = match args.objective {
        ToyObjective::Dpo => ObjectiveKind::Dpo,
        ToyObjective::Rs => ObjectiveKind::RejectionSampling,
        ToyObjective::MaskedCe => ObjectiveKind::MaskedCe,
    };
    let cfg = ObjectiveConfig::new(args.beta, kind).map_err(usage)?;
    let (masked, unmasked) =
        poison_span_experiment(&task, &cfg, args.lr, args.steps).map_err(usage)?;

    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for i in 0..masked.steps {
            w.serialize(CurveRow {
                step: i + 1,
                good_lp_masked: masked.mean_logprob_good[i],
                poison_lp_masked: masked.mean_logprob_poison[i],
                good_lp_unmasked: unmasked.mean_logprob_good[i],
                poison_lp_unmasked: unmasked.mean_logprob_poison[i],
            })
            .map_err(|e| CliError::Io(e.into()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(anyhow!("{e}")))?;
        write_output(Some(path), &bytes).map_err(CliError::Io)?;
    }
    let report = ToyReport {
        task: &task,
        objective: kind,
        beta: args.beta,
        lr: args.lr,
        steps: args.steps,
        masked,
        unmasked,
    };
    emit(args.output.as_deref(), &[report])
}

#[derive(Serialize)]
struct ReportRow<'a> {
    prompt_id: &'a str,
    line: usize,
    c: f64,
    k: usize,
    err_sequence: f64,
    noise_penalty: f64,
    err_total: f64,
}

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let grid: Vec<f64> = args
        .c_grid
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--c-grid: bad value `{s}`")))
        })
        .collect::<Result<_, _>>()?;
    for &c in &grid {
        check_scale(c)?;
    }
    let traces = read_traces(&args.io.input)?;
    let results = traces
        .par_iter()
        .map(|l| {
            let rows = grid
                .iter()
                .map(|&c| {
                    let (_, r) = optimal_segmentation(&l.value, c, args.aggregate.into())?;
                    Ok(ReportRow {
                        prompt_id: l.value.prompt_id(),
                        line: l.number,
                        c,
                        k: r.k,
                        err_sequence: r.err_sequence,
                        noise_penalty: r.noise_penalty,
                        err_total: r.err_total,
                    })
                })
                .collect::<segrew_core::Result<Vec<_>>>();
            (l.number, rows)
        })
        .collect();
    let rows: Vec<ReportRow> = collect_lines(results)?.into_iter().flatten().collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(|e| CliError::Io(e.into()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(anyhow!("{e}")))?;
    write_output(args.io.output.as_deref(), &bytes).map_err(CliError::Io)
}
