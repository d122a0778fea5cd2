//! Noisy reward traces with known segment structure.
//!
//! Token rewards are `true_reward(segment of t) + eps_t` with i.i.d.
//! `eps_t ~ Normal(0, sigma^2)`. Each trial draws from its own ChaCha8 stream:
//! the generator is seeded with the master seed and the stream number is the
//! trial index, so trials are independent and can be run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::{optimal_segmentation, sequence_error, token_noise_error};
use crate::numeric::{self, CompensatedSum};
use crate::segmentation::{Label, Segment, SegmentAggregate, Segmentation};
use crate::trace::{SampleClass, Token, TokenRewardTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// `(length, true_reward)` per ground-truth segment.
    pub true_segments: Vec<(usize, f64)>,
    pub noise_sigma: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(
        true_segments: Vec<(usize, f64)>,
        noise_sigma: f64,
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            true_segments,
            noise_sigma,
            trials,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.true_segments.iter().any(|&(len, _)| len == 0) {
            return invalid("true_segments", "segment lengths must be >= 1".to_owned());
        }
        if self.true_segments.iter().any(|&(_, r)| !r.is_finite()) {
            return invalid("true_segments", "segment rewards must be finite".to_owned());
        }
        if self.is_empty() {
            return invalid("true_segments", "total length must be >= 1".to_owned());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid(
                "sigma",
                format!("must be finite and >= 0, got {}", self.noise_sigma),
            );
        }
        if self.trials == 0 {
            return invalid("trials", "must be >= 1".to_owned());
        }
        Ok(())
    }

    /// Total length `N`.
    pub fn len(&self) -> usize {
        self.true_segments.iter().map(|&(len, _)| len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Noiseless per-token rewards.
    pub fn true_rewards(&self) -> Vec<f64> {
        self.true_segments
            .iter()
            .flat_map(|&(len, r)| std::iter::repeat_n(r, len))
            .collect()
    }

    fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        rng
    }

    fn noise(&self, trial: usize) -> Vec<f64> {
        let mut rng = self.trial_rng(trial);
        (0..self.len())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.noise_sigma * z
            })
            .collect()
    }

    /// Ground-truth segmentation of the noiseless rewards (Mean aggregate).
    pub fn true_segmentation(&self, rewards: &[f64]) -> Result<Segmentation> {
        let mut start = 0;
        let segments = self
            .true_segments
            .iter()
            .map(|&(len, truth)| {
                let mut seg = Segment::over(
                    rewards,
                    start,
                    start + len - 1,
                    Label::Neutral,
                    SegmentAggregate::Mean,
                );
                seg.label = Label::from_sign(if truth > 0.0 {
                    1
                } else if truth < 0.0 {
                    -1
                } else {
                    0
                });
                start += len;
                seg
            })
            .collect();
        Segmentation::new(segments, rewards.len())
    }
}

/// Noisy trace for one trial, with the ground-truth segmentation.
pub fn generate_trace(cfg: &SimConfig, trial: usize) -> Result<(TokenRewardTrace, Segmentation)> {
    cfg.validate()?;
    if trial >= cfg.trials {
        return Err(Error::InvalidParameter {
            name: "trial",
            reason: format!("trial {trial} out of range for {} trials", cfg.trials),
        });
    }
    let (trace, _) = noisy_trace(cfg, trial)?;
    let truth = cfg.true_segmentation(trace.rewards())?;
    Ok((trace, truth))
}

fn noisy_trace(cfg: &SimConfig, trial: usize) -> Result<(TokenRewardTrace, Vec<f64>)> {
    let noise = cfg.noise(trial);
    let rewards: Vec<f64> = cfg
        .true_rewards()
        .iter()
        .zip(&noise)
        .map(|(r, e)| r + e)
        .collect();
    let tokens = (0..rewards.len() as i64).map(Token::Id).collect();
    let trace = TokenRewardTrace::new(
        format!("trial-{trial}"),
        SampleClass::Chosen,
        tokens,
        rewards,
    )?;
    Ok((trace, noise))
}

/// Summary of an error study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub sigma: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    /// Mean over trials of `sum_t eps_t^2`.
    pub mean_token_err: f64,
    /// `sigma^2 * N`.
    pub theory_token_err: f64,
    /// Empirical standard error of `mean_token_err`.
    pub stderr: f64,
    /// Theoretical standard error `sigma^2 * sqrt(2N / trials)`.
    pub theory_stderr: f64,
    /// Mean sequence error under the ground-truth segmentation.
    pub mean_sequence_err: f64,
    #[serde(rename = "mean_recovered_K")]
    pub mean_recovered_k: f64,
    #[serde(rename = "true_K")]
    pub true_k: usize,
    /// Trials whose optimal segmentation has exactly the true boundaries.
    pub exact_recoveries: usize,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TrialOutcome {
    token_err: f64,
    sequence_err: f64,
    recovered_k: usize,
    exact: bool,
}

fn run_trial(cfg: &SimConfig, c: f64, trial: usize, true_starts: &[usize]) -> Result<TrialOutcome> {
    let (trace, noise) = noisy_trace(cfg, trial)?;
    let truth = cfg.true_segmentation(trace.rewards())?;
    let (best, _) = optimal_segmentation(&trace, c, SegmentAggregate::Mean)?;
    Ok(TrialOutcome {
        token_err: numeric::sum(noise.iter().map(|e| e * e)),
        sequence_err: sequence_error(&trace, &truth)?,
        recovered_k: best.len(),
        exact: best.starts() == true_starts,
    })
}

/// Per trial: empirical token noise error `sum eps^2`, sequence error under
/// the ground truth, and the optimal segmenter's `K` at noise scale `c`.
pub fn error_study(cfg: &SimConfig, c: f64) -> Result<StudyReport> {
    cfg.validate()?;
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::NegativeNoiseScale(c));
    }
    let n = cfg.len();
    let true_starts: Vec<usize> = cfg
        .true_segments
        .iter()
        .scan(0, |start, &(len, _)| {
            let s = *start;
            *start += len;
            Some(s)
        })
        .collect();
    let outcomes = (0..cfg.trials)
        .map(|trial| run_trial(cfg, c, trial, &true_starts))
        .collect::<Result<Vec<_>>>()?;

    let trials = cfg.trials as f64;
    let mean_of = |f: &dyn Fn(&TrialOutcome) -> f64| {
        let mut acc = CompensatedSum::new();
        acc.extend(outcomes.iter().map(f));
        acc.value() / trials
    };
    let mean_token_err = mean_of(&|o| o.token_err);
    let var = if cfg.trials > 1 {
        numeric::sum(
            outcomes
                .iter()
                .map(|o| (o.token_err - mean_token_err).powi(2)),
        ) / (trials - 1.0)
    } else {
        0.0
    };
    let s2 = cfg.noise_sigma * cfg.noise_sigma;
    Ok(StudyReport {
        sigma: cfg.noise_sigma,
        n,
        trials: cfg.trials,
        mean_token_err,
        theory_token_err: token_noise_error(cfg.noise_sigma, n),
        stderr: (var / trials).sqrt(),
        theory_stderr: s2 * (2.0 * n as f64 / trials).sqrt(),
        mean_sequence_err: mean_of(&|o| o.sequence_err),
        mean_recovered_k: mean_of(&|o| o.recovered_k as f64),
        true_k: cfg.true_segments.len(),
        exact_recoveries: outcomes.iter().filter(|o| o.exact).count(),
        c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_model::sequence_error;

    #[test]
    fn noiseless_traces_are_piecewise_constant() {
        let cfg = SimConfig::new(vec![(3, 1.0), (2, -0.5)], 0.0, 2, 9).unwrap();
        let (trace, truth) = generate_trace(&cfg, 1).unwrap();
        assert_eq!(trace.rewards(), &[1.0, 1.0, 1.0, -0.5, -0.5]);
        assert_eq!(truth.starts(), vec![0, 3]);
        assert_eq!(sequence_error(&trace, &truth).unwrap(), 0.0);
        let cfg = SimConfig::new(vec![(6, 1.0)], 0.0, 1, 0).unwrap();
        assert_eq!(generate_trace(&cfg, 0).unwrap().0.rewards(), &[1.0; 6]);
    }

    #[test]
    fn trials_are_reproducible_and_distinct() {
        let cfg = SimConfig::new(vec![(50, 0.0)], 1.0, 3, 42).unwrap();
        let a = generate_trace(&cfg, 2).unwrap().0;
        let b = generate_trace(&cfg, 2).unwrap().0;
        assert_eq!(a, b);
        assert!(a
            .rewards()
            .iter()
            .zip(b.rewards())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(generate_trace(&cfg, 1).unwrap().0.rewards(), a.rewards());
        assert!(generate_trace(&cfg, 3).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(SimConfig::new(vec![], 1.0, 1, 0).is_err());
        assert!(SimConfig::new(vec![(0, 1.0)], 1.0, 1, 0).is_err());
        assert!(SimConfig::new(vec![(2, 1.0)], -1.0, 1, 0).is_err());
        assert!(SimConfig::new(vec![(2, 1.0)], 1.0, 0, 0).is_err());
    }

    #[test]
    fn study_reports_theory_line() {
        let cfg = SimConfig::new(vec![(40, 1.0), (60, -1.0)], 0.5, 40, 5).unwrap();
        let report = error_study(&cfg, 1.0).unwrap();
        assert_eq!(report.n, 100);
        assert_eq!(report.true_k, 2);
        assert_eq!(report.theory_token_err, 25.0);
        assert!((report.mean_token_err - 25.0).abs() < 4.0 * report.theory_stderr);
        assert!(report.mean_sequence_err > 0.0);
        let json = serde_json::to_value(&report).unwrap();
        for key in [
            "sigma",
            "N",
            "trials",
            "mean_token_err",
            "theory_token_err",
            "stderr",
            "mean_recovered_K",
            "true_K",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}
