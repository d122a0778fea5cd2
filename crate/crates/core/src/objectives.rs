//! Preference-optimization objectives with per-token masks.
//!
//! Every objective is returned as a loss to minimize, together with its
//! gradient with respect to the policy log-probabilities of the sampled
//! tokens. Masks gate individual token contributions: a token with mask 0
//! contributes nothing to the loss and receives a zero gradient. Passing no
//! mask is the same as passing an all-ones mask.
//!
//! The KL penalty uses the per-token log-ratio `log pi_theta - log pi_ref` on
//! the sampled trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};
use crate::trace::{MaskMode, MaskVector, PairSample, SampleClass, TokenRewardTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    MaskedCe,
    Dpo,
    AdaptiveDpo,
    PpoObjective,
    AdaptivePpo,
    RejectionSampling,
    AdaptiveRs,
}

impl ObjectiveKind {
    /// Whether the objective consumes a masks.
    pub fn is_adaptive(self) -> bool {
        matches!(
            self,
            ObjectiveKind::MaskedCe
                | ObjectiveKind::AdaptiveDpo
                | ObjectiveKind::AdaptivePpo
                | ObjectiveKind::AdaptiveRs
        )
    }

    /// Whether the objective is defined on chosen/rejected pairs.
    pub fn is_pairwise(self) -> bool {
        matches!(self, ObjectiveKind::Dpo | ObjectiveKind::AdaptiveDpo)
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::MaskedCe => "masked-ce",
            ObjectiveKind::Dpo => "dpo",
            ObjectiveKind::AdaptiveDpo => "adaptive-dpo",
            ObjectiveKind::PpoObjective => "ppo-objective",
            ObjectiveKind::AdaptivePpo => "adaptive-ppo",
            ObjectiveKind::RejectionSampling => "rejection-sampling",
            ObjectiveKind::AdaptiveRs => "adaptive-rs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    beta: f64,
    kind: ObjectiveKind,
}

impl ObjectiveConfig {
    /// `beta` must be finite and non-negative. `beta = 0` switches the KL
    /// term off.
    pub fn new(beta: f64, kind: ObjectiveKind) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be finite and >= 0, got {beta}"),
            });
        }
        Ok(Self { beta, kind })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }
}

/// Loss value with its per-token decomposition and gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss: f64,
    pub per_token_terms: Vec<f64>,
    /// d(loss) / d(logprob_policy), one entry per token. For pairwise
    /// objectives the chosen trace comes first, then the rejected one.
    pub grad_wrt_logprob_policy: Vec<f64>,
    /// Number of tokens that contribute (mask value 1).
    pub masked_token_count: usize,
}

/// Bradley-Terry preference probability `sigmoid(r1 - r2)`.
pub fn preference_prob(r1: f64, r2: f64) -> f64 {
    numeric::sigmoid(r1 - r2)
}

fn mask_values(mask: Option<&MaskVector>, len: usize, field: &'static str) -> Result<Vec<bool>> {
    match mask {
        None => Ok(vec![true; len]),
        Some(mask) => {
            if mask.mode() != MaskMode::Binary {
                return Err(Error::InvalidParameter {
                    name: "mask",
                    reason: "loss masks must be binary".to_owned(),
                });
            }
            if mask.len() != len {
                return Err(Error::LengthMismatch {
                    field,
                    expected: len,
                    found: mask.len(),
                });
            }
            Ok(mask.values().iter().map(|&v| v == 1).collect())
        }
    }
}

fn policy_and_ref(trace: &TokenRewardTrace) -> Result<(&[f64], &[f64])> {
    let policy = trace
        .logprob_policy()
        .ok_or(Error::MissingLogprobs("logprob_policy"))?;
    let reference = trace
        .logprob_ref()
        .ok_or(Error::MissingLogprobs("logprob_ref"))?;
    Ok((policy, reference))
}

/// Builds a breakdown from per-token loss terms and gradients; masked
/// positions get exact zeros.
fn tokenwise(
    keep: &[bool],
    term: impl Fn(usize) -> f64,
    grad: impl Fn(usize) -> f64,
) -> LossBreakdown {
    let mut total = CompensatedSum::new();
    let mut per_token_terms = Vec::with_capacity(keep.len());
    let mut grads = Vec::with_capacity(keep.len());
    for (t, &k) in keep.iter().enumerate() {
        if k {
            let v = term(t);
            total.add(v);
            per_token_terms.push(v);
            grads.push(grad(t));
        } else {
            per_token_terms.push(0.0);
            grads.push(0.0);
        }
    }
    LossBreakdown {
        loss: total.value(),
        per_token_terms,
        grad_wrt_logprob_policy: grads,
        masked_token_count: keep.iter().filter(|&&k| k).count(),
    }
}

/// Masked cross-entropy on the realized tokens: `-sum_i m_i * logprob_i`.
pub fn masked_ce(logprob_policy: &[f64], mask: &MaskVector) -> Result<LossBreakdown> {
    let keep = mask_values(Some(mask), logprob_policy.len(), "mask")?;
    Ok(tokenwise(&keep, |t| -logprob_policy[t], |_| -1.0))
}

/// DPO loss `-log sigmoid(beta * (h_w - h_l))`, where `h` is the masked sum of
/// per-token log-ratios of a trace.
pub fn dpo_loss(
    pair: &PairSample,
    cfg: &ObjectiveConfig,
    masks: Option<(&MaskVector, &MaskVector)>,
) -> Result<LossBreakdown> {
    let (cp, cr) = policy_and_ref(pair.chosen())?;
    let (rp, rr) = policy_and_ref(pair.rejected())?;
    let keep_c = mask_values(masks.map(|m| m.0), cp.len(), "chosen_mask")?;
    let keep_r = mask_values(masks.map(|m| m.1), rp.len(), "rejected_mask")?;
    let beta = cfg.beta();

    let masked_ratio_sum = |policy: &[f64], reference: &[f64], keep: &[bool]| {
        let mut acc = CompensatedSum::new();
        for t in 0..policy.len() {
            if keep[t] {
                acc.add(policy[t] - reference[t]);
            }
        }
        acc.value()
    };
    let h_w = masked_ratio_sum(cp, cr, &keep_c);
    let h_l = masked_ratio_sum(rp, rr, &keep_r);
    let z = beta * (h_w - h_l);
    let loss = numeric::softplus(-z);
    // d loss / d h_w = -beta * sigmoid(-z)
    let weight = beta * numeric::sigmoid(-z);

    let chosen = tokenwise(&keep_c, |t| beta * (cp[t] - cr[t]), |_| -weight);
    let rejected = tokenwise(&keep_r, |t| -beta * (rp[t] - rr[t]), |_| weight);
    Ok(LossBreakdown {
        loss,
        per_token_terms: [chosen.per_token_terms, rejected.per_token_terms].concat(),
        grad_wrt_logprob_policy: [
            chosen.grad_wrt_logprob_policy,
            rejected.grad_wrt_logprob_policy,
        ]
        .concat(),
        masked_token_count: chosen.masked_token_count + rejected.masked_token_count,
    })
}

/// Negated KL-regularized reward objective
/// `J = sum_t m_t * (r_t - beta * (log pi_theta - log pi_ref)_t)`.
pub fn ppo_objective(
    trace: &TokenRewardTrace,
    cfg: &ObjectiveConfig,
    mask: Option<&MaskVector>,
) -> Result<LossBreakdown> {
    let (policy, reference) = policy_and_ref(trace)?;
    let keep = mask_values(mask, trace.len(), "mask")?;
    let rewards = trace.rewards();
    let beta = cfg.beta();
    Ok(tokenwise(
        &keep,
        |t| -(rewards[t] - beta * (policy[t] - reference[t])),
        |_| beta,
    ))
}

/// Negated KL-regularized log-likelihood of a chosen sample,
/// `-sum_t m_t * (log pi_theta_t - beta * (log pi_theta - log pi_ref)_t)`.
pub fn rejection_sampling_loss(
    trace: &TokenRewardTrace,
    cfg: &ObjectiveConfig,
    mask: Option<&MaskVector>,
) -> Result<LossBreakdown> {
    if trace.sample_class() != SampleClass::Chosen {
        return Err(Error::NotChosenSample);
    }
    let (policy, reference) = policy_and_ref(trace)?;
    let keep = mask_values(mask, trace.len(), "mask")?;
    let beta = cfg.beta();
    Ok(tokenwise(
        &keep,
        |t| -(policy[t] - beta * (policy[t] - reference[t])),
        |_| -(1.0 - beta),
    ))
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
    pub max_relative_error: f64,
    pub worst_index: usize,
}

/// Compares the analytic gradient of `objective` at `logprobs` with central
/// differences of step `h` (in `[1e-7, 1e-3]`).
///
/// `objective` maps a full policy log-probability vector to a breakdown; for
/// pairwise objectives the vector is the chosen entries followed by the
/// rejected ones.
pub fn check_gradients<F>(objective: F, logprobs: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<LossBreakdown>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidParameter {
            name: "h",
            reason: format!("step must lie in [1e-7, 1e-3], got {h}"),
        });
    }
    let analytic = objective(logprobs)?.grad_wrt_logprob_policy;
    if analytic.len() != logprobs.len() {
        return Err(Error::LengthMismatch {
            field: "grad_wrt_logprob_policy",
            expected: logprobs.len(),
            found: analytic.len(),
        });
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
    };
    let mut point = logprobs.to_vec();
    for i in 0..point.len() {
        let x = logprobs[i];
        let (up, down) = (x + h, x - h);
        point[i] = up;
        let f_up = objective(&point)?.loss;
        point[i] = down;
        let f_down = objective(&point)?.loss;
        point[i] = x;
        // divide by the step actually taken after rounding
        let numeric = (f_up - f_down) / (up - down);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        if err > report.max_relative_error {
            report = GradCheckReport {
                max_relative_error: err,
                worst_index: i,
            };
        }
    }
    Ok(report)
}

/// Closure for [`check_gradients`] evaluating the DPO loss of `pair` at a
/// concatenated policy log-probability vector.
pub fn dpo_objective_fn<'a>(
    pair: &'a PairSample,
    cfg: &'a ObjectiveConfig,
    masks: Option<(&'a MaskVector, &'a MaskVector)>,
) -> impl Fn(&[f64]) -> Result<LossBreakdown> + 'a {
    move |lp: &[f64]| {
        let split = pair.chosen().len();
        let moved = pair.with_policy_logprobs(lp[..split].to_vec(), lp[split..].to_vec())?;
        dpo_loss(&moved, cfg, masks)
    }
}
