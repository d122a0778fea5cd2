//! Segmentation error model.
//!
//! For a segmentation into `K` contiguous segments `S_k` with segment reward
//! `r_k`, the total error is
//!
//! ```text
//! err = sum_k sum_{t in S_k} (r_t - r_k)^2  +  c^2 * K
//! ```
//!
//! The first term is the approximation error of assigning one reward to every
//! token of a segment; the second charges `c^2` of noise per segment.
//! [`optimal_segmentation`] minimizes it exactly over all `2^(N-1)` contiguous
//! partitions with an `O(N^2)` dynamic program; [`brute_force_segmentation`]
//! enumerates them for small `N`.
//!
//! Ties are broken by fewer segments, then by the earliest start of the last
//! segment, applied recursively to the remaining prefix.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, costs_tie, CompensatedSum};
use crate::segmentation::{SegmentAggregate, Segmentation};
use crate::trace::TokenRewardTrace;

/// Largest trace the exhaustive search accepts.
pub const BRUTE_FORCE_MAX_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentError {
    pub index: usize,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub err_sequence: f64,
    pub noise_penalty: f64,
    pub err_total: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub c: f64,
    /// Within-segment squared error of each segment.
    pub per_segment: Vec<SegmentError>,
}

fn check_tiling(trace: &TokenRewardTrace, segmentation: &Segmentation) -> Result<()> {
    if segmentation.trace_length() != trace.len() {
        return Err(Error::TilingViolation(format!(
            "segmentation covers {} tokens, trace has {}",
            segmentation.trace_length(),
            trace.len()
        )));
    }
    Ok(())
}

fn check_noise_scale(c: f64) -> Result<()> {
    if c >= 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeNoiseScale(c))
    }
}

/// Squared deviation of `rewards` from their aggregate, computed directly.
fn segment_squared_error(rewards: &[f64], mode: SegmentAggregate) -> f64 {
    let r_k = match mode {
        SegmentAggregate::Mean => numeric::sum(rewards.iter().copied()) / rewards.len() as f64,
        SegmentAggregate::Last => rewards[rewards.len() - 1],
    };
    numeric::sum(rewards.iter().map(|r| (r - r_k) * (r - r_k)))
}

fn per_segment_errors(trace: &TokenRewardTrace, segmentation: &Segmentation) -> Vec<SegmentError> {
    let rewards = trace.rewards();
    segmentation
        .segments()
        .iter()
        .enumerate()
        .map(|(index, seg)| SegmentError {
            index,
            contribution: segment_squared_error(&rewards[seg.start..=seg.end], seg.aggregate_mode),
        })
        .collect()
}

/// Approximation error of a segmentation: `sum_k sum_{t in S_k} (r_t - r_k)^2`.
///
/// `r_k` is recomputed from the trace under each segment's aggregate mode.
pub fn sequence_error(trace: &TokenRewardTrace, segmentation: &Segmentation) -> Result<f64> {
    check_tiling(trace, segmentation)?;
    Ok(numeric::sum(
        per_segment_errors(trace, segmentation)
            .into_iter()
            .map(|s| s.contribution),
    ))
}

/// Approximation error plus `c^2 * K`.
pub fn total_error(
    trace: &TokenRewardTrace,
    segmentation: &Segmentation,
    c: f64,
) -> Result<ErrorReport> {
    check_tiling(trace, segmentation)?;
    check_noise_scale(c)?;
    let per_segment = per_segment_errors(trace, segmentation);
    let err_sequence = numeric::sum(per_segment.iter().map(|s| s.contribution));
    let k = segmentation.len();
    let noise_penalty = c * c * k as f64;
    Ok(ErrorReport {
        err_sequence,
        noise_penalty,
        err_total: err_sequence + noise_penalty,
        k,
        c,
        per_segment,
    })
}

/// Token-level noise error `sigma^2 * N`.
pub fn token_noise_error(sigma: f64, n: usize) -> f64 {
    sigma * sigma * n as f64
}

/// Prefix sums of `r` and `r^2`, giving O(1) segment costs.
#[derive(Debug, Clone)]
pub struct SegmentCosts<'a> {
    rewards: &'a [f64],
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    mode: SegmentAggregate,
}

impl<'a> SegmentCosts<'a> {
    pub fn new(rewards: &'a [f64], mode: SegmentAggregate) -> Self {
        let mut sum = Vec::with_capacity(rewards.len() + 1);
        let mut sum_sq = Vec::with_capacity(rewards.len() + 1);
        let (mut s, mut q) = (CompensatedSum::new(), CompensatedSum::new());
        sum.push(0.0);
        sum_sq.push(0.0);
        for &r in rewards {
            s.add(r);
            q.add(r * r);
            sum.push(s.value());
            sum_sq.push(q.value());
        }
        Self {
            rewards,
            sum,
            sum_sq,
            mode,
        }
    }

    /// Squared error of the half-open segment `start..end`.
    #[inline]
    pub fn cost(&self, start: usize, end: usize) -> f64 {
        let n = (end - start) as f64;
        let s = self.sum[end] - self.sum[start];
        let q = self.sum_sq[end] - self.sum_sq[start];
        let cost = match self.mode {
            SegmentAggregate::Mean => q - s * s / n,
            SegmentAggregate::Last => {
                let last = self.rewards[end - 1];
                q - 2.0 * last * s + n * last * last
            }
        };
        cost.max(0.0)
    }
}

/// Optimal partition as segment start indices plus the objective value the
/// dynamic program reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub starts: Vec<usize>,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    cost: f64,
    segments: usize,
    last_start: usize,
}

/// Exact minimizer of the total error over contiguous partitions of `rewards`.
pub fn optimal_partition(rewards: &[f64], c: f64, mode: SegmentAggregate) -> Result<Partition> {
    check_noise_scale(c)?;
    if rewards.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let n = rewards.len();
    let penalty = c * c;
    let costs = SegmentCosts::new(rewards, mode);
    let mut best: Vec<Cell> = Vec::with_capacity(n + 1);
    best.push(Cell {
        cost: 0.0,
        segments: 0,
        last_start: 0,
    });
    for end in 1..=n {
        let mut cur: Option<Cell> = None;
        for (start, prev) in best.iter().enumerate() {
            let cand = Cell {
                cost: prev.cost + costs.cost(start, end) + penalty,
                segments: prev.segments + 1,
                last_start: start,
            };
            // Ascending `start`, so an exact tie keeps the earlier start.
            let better = match cur {
                None => true,
                Some(cur) if costs_tie(cand.cost, cur.cost) => cand.segments < cur.segments,
                Some(cur) => cand.cost < cur.cost,
            };
            if better {
                cur = Some(cand);
            }
        }
        best.push(cur.expect("end >= 1 has at least one candidate"));
    }
    let mut starts = Vec::with_capacity(best[n].segments);
    let mut end = n;
    while end > 0 {
        let start = best[end].last_start;
        starts.push(start);
        end = start;
    }
    starts.reverse();
    Ok(Partition {
        starts,
        objective: best[n].cost,
    })
}

/// Segmentation minimizing the total error, with its report.
pub fn optimal_segmentation(
    trace: &TokenRewardTrace,
    c: f64,
    aggregate_mode: SegmentAggregate,
) -> Result<(Segmentation, ErrorReport)> {
    let partition = optimal_partition(trace.rewards(), c, aggregate_mode)?;
    let segmentation =
        Segmentation::from_starts(trace.rewards(), &partition.starts, aggregate_mode)?;
    let report = total_error(trace, &segmentation, c)?;
    Ok((segmentation, report))
}

/// Orders candidate partitions: lower cost, then fewer segments, then earliest
/// starts compared from the last segment backwards.
fn tie_break(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    if !costs_tie(a.0, b.0) {
        return a.0.total_cmp(&b.0);
    }
    a.1.len()
        .cmp(&b.1.len())
        .then_with(|| a.1.iter().rev().cmp(b.1.iter().rev()))
}

/// Exhaustive search over all contiguous partitions; `N <= 20`.
///
/// Every candidate is scored with [`total_error`] directly, so this serves as
/// an independent check of [`optimal_segmentation`].
pub fn brute_force_segmentation(
    trace: &TokenRewardTrace,
    c: f64,
    aggregate_mode: SegmentAggregate,
) -> Result<(Segmentation, ErrorReport)> {
    check_noise_scale(c)?;
    let n = trace.len();
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(Error::TraceTooLong {
            len: n,
            max: BRUTE_FORCE_MAX_LEN,
        });
    }
    let rewards = trace.rewards();
    let mut best: Option<(Vec<usize>, Segmentation, ErrorReport)> = None;
    for cuts in 0u32..(1u32 << (n - 1)) {
        let starts: Vec<usize> = std::iter::once(0)
            .chain((1..n).filter(|t| cuts & (1 << (t - 1)) != 0))
            .collect();
        let seg = Segmentation::from_starts(rewards, &starts, aggregate_mode)?;
        let report = total_error(trace, &seg, c)?;
        let replace = match &best {
            None => true,
            Some((b_starts, _, b_report)) => {
                tie_break((report.err_total, &starts), (b_report.err_total, b_starts))
                    == Ordering::Less
            }
        };
        if replace {
            best = Some((starts, seg, report));
        }
    }
    let (_, seg, report) = best.expect("at least one partition exists");
    Ok((seg, report))
}
