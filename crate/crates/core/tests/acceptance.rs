//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segrew_core::objectives::dpo_objective_fn;
use segrew_core::segmentation::adaptive_mask_rewards;
use segrew_core::*;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> std::result::Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))?;
    Ok(took)
}

fn uniform_rewards(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn logprobs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-4.0..=-0.01)).collect()
}

fn binary_mask(rng: &mut ChaCha8Rng, n: usize) -> MaskVector {
    MaskVector::binary((0..n).map(|_| rng.gen_range(0..=1)).collect()).unwrap()
}

fn random_trace(rng: &mut ChaCha8Rng, class: SampleClass, n: usize) -> TokenRewardTrace {
    let rewards = uniform_rewards(rng, n);
    TokenRewardTrace::from_rewards(class, &rewards)
        .unwrap()
        .with_logprobs(logprobs(rng, n), logprobs(rng, n))
        .unwrap()
}

fn random_pair(rng: &mut ChaCha8Rng) -> PairSample {
    let nc = rng.gen_range(1..=16);
    let nr = rng.gen_range(1..=16);
    PairSample::new(
        random_trace(rng, SampleClass::Chosen, nc),
        random_trace(rng, SampleClass::Rejected, nr),
    )
    .unwrap()
}

fn beta(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(0.01..=1.0)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    let mut worst = 0.0f64;
    for i in 0..200 {
        let n = rng.gen_range(1..=14);
        let trace =
            TokenRewardTrace::from_rewards(SampleClass::Chosen, &uniform_rewards(&mut rng, n))
                .unwrap();
        for c in [0.0, 0.1, 0.5, 1.0, 2.0] {
            let (dp, dp_report) = optimal_segmentation(&trace, c, SegmentAggregate::Mean).unwrap();
            let (bf, bf_report) =
                brute_force_segmentation(&trace, c, SegmentAggregate::Mean).unwrap();
            let diff = (dp_report.err_total - bf_report.err_total).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-9, || {
                format!("trace {i}, c={c}: error differs by {diff:e}")
            })?;
            ensure(dp == bf, || {
                format!(
                    "trace {i}, c={c}: starts {:?} vs {:?}",
                    dp.starts(),
                    bf.starts()
                )
            })?;
            compared += 1;
        }
    }
    let took = within_time(start, Duration::from_secs(10))?;
    Ok(format!(
        "{compared} cases, max |diff| {worst:.1e}, {took:.2?}"
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (sigma, n, trials) = (0.5, 1000, 1000);
    let cfg = SimConfig::new(vec![(n, 0.0)], sigma, trials, 2024).unwrap();
    let report = error_study(&cfg, 1.0).unwrap();
    let tol = 3.0 * sigma * sigma * (2.0 * n as f64 / trials as f64).sqrt();
    let dev = (report.mean_token_err - 250.0).abs();
    ensure(dev <= tol, || {
        format!(
            "mean {} deviates {dev:.3} > {tol:.3}",
            report.mean_token_err
        )
    })?;
    let took = within_time(start, Duration::from_secs(5))?;
    Ok(format!(
        "mean {:.3}, |dev| {dev:.3} <= {tol:.3}, {took:.2?}",
        report.mean_token_err
    ))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 4];

    for _ in 0..100 {
        let pair = random_pair(&mut rng);
        let cfg = ObjectiveConfig::new(beta(&mut rng), ObjectiveKind::AdaptiveDpo).unwrap();
        let masks = (
            binary_mask(&mut rng, pair.chosen().len()),
            binary_mask(&mut rng, pair.rejected().len()),
        );
        let x: Vec<f64> = [
            pair.chosen().logprob_policy().unwrap(),
            pair.rejected().logprob_policy().unwrap(),
        ]
        .concat();
        let f = dpo_objective_fn(&pair, &cfg, Some((&masks.0, &masks.1)));
        worst[0] = worst[0].max(check_gradients(f, &x, h).unwrap().max_relative_error);
    }
    for _ in 0..100 {
        let n = rng.gen_range(1..=16);
        let trace = random_trace(&mut rng, SampleClass::Chosen, n);
        let cfg = ObjectiveConfig::new(beta(&mut rng), ObjectiveKind::AdaptivePpo).unwrap();
        let mask = binary_mask(&mut rng, n);
        let x = trace.logprob_policy().unwrap().to_vec();
        let f = |lp: &[f64]| {
            ppo_objective(
                &trace.clone().with_policy_logprobs(lp.to_vec())?,
                &cfg,
                Some(&mask),
            )
        };
        worst[1] = worst[1].max(check_gradients(f, &x, h).unwrap().max_relative_error);
    }
    for _ in 0..100 {
        let n = rng.gen_range(1..=16);
        let trace = random_trace(&mut rng, SampleClass::Chosen, n);
        let cfg = ObjectiveConfig::new(beta(&mut rng), ObjectiveKind::AdaptiveRs).unwrap();
        let mask = binary_mask(&mut rng, n);
        let x = trace.logprob_policy().unwrap().to_vec();
        let f = |lp: &[f64]| {
            rejection_sampling_loss(
                &trace.clone().with_policy_logprobs(lp.to_vec())?,
                &cfg,
                Some(&mask),
            )
        };
        worst[2] = worst[2].max(check_gradients(f, &x, h).unwrap().max_relative_error);
    }
    for _ in 0..100 {
        let n = rng.gen_range(1..=16);
        let x = logprobs(&mut rng, n);
        let mask = binary_mask(&mut rng, n);
        let f = |lp: &[f64]| masked_ce(lp, &mask);
        worst[3] = worst[3].max(check_gradients(f, &x, h).unwrap().max_relative_error);
    }

    ensure(worst[0] < 1e-6, || {
        format!("dpo max rel error {:e}", worst[0])
    })?;
    for (name, w) in ["ppo", "rejection sampling", "masked ce"]
        .iter()
        .zip(&worst[1..])
    {
        ensure(*w < 1e-9, || format!("{name} max rel error {w:e}"))?;
    }
    let took = within_time(start, Duration::from_secs(5))?;
    Ok(format!(
        "max rel error dpo {:.1e}, ppo {:.1e}, rs {:.1e}, ce {:.1e}, {took:.2?}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let pair = random_pair(&mut rng);
        let same = pair
            .with_policy_logprobs(
                pair.chosen().logprob_ref().unwrap().to_vec(),
                pair.rejected().logprob_ref().unwrap().to_vec(),
            )
            .unwrap();
        let cfg = ObjectiveConfig::new(beta(&mut rng), ObjectiveKind::Dpo).unwrap();
        let loss = dpo_loss(&same, &cfg, None).unwrap().loss;
        worst = worst.max((loss - std::f64::consts::LN_2).abs());
    }
    ensure(worst <= 1e-12, || {
        format!("dpo at reference deviates from ln 2 by {worst:e}")
    })?;

    for _ in 0..100 {
        let n = rng.gen_range(1..=32);
        let out = masked_ce(&logprobs(&mut rng, n), &MaskVector::zeros(n)).unwrap();
        ensure(out.loss == 0.0 && out.loss.is_sign_positive(), || {
            format!("zero-mask ce gave {}", out.loss)
        })?;
    }

    let b = 0.25;
    let table = [
        (SampleClass::Chosen, b - 0.5, 0),
        (SampleClass::Chosen, b, 0),
        (SampleClass::Chosen, b + 0.5, 1),
        (SampleClass::Rejected, b - 0.5, 1),
        (SampleClass::Rejected, b, 1),
        (SampleClass::Rejected, b + 0.5, 0),
    ];
    for (class, r, expected) in table {
        let got = adaptive_mask_rewards(&[r], class, b).values()[0];
        ensure(got == expected, || {
            format!("{class:?} r={r} b={b}: mask {got}, expected {expected}")
        })?;
        let trace = TokenRewardTrace::from_rewards(class, &[r]).unwrap();
        ensure(adaptive_mask(&trace, b).values() == [expected], || {
            format!("{class:?} r={r}: trace form disagrees")
        })?;
    }
    Ok(format!(
        "ln2 deviation {worst:.1e}, zero-mask ce exact, 6/6 truth table rows"
    ))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ladder = [0.0, 0.1, 0.25, 0.5, 1.0];
    let mut checked = 0;
    for i in 0..1000 {
        let rewards = uniform_rewards(&mut rng, 64);
        let b = rng.gen_range(-0.2..=0.2);
        let mut prev = usize::MAX;
        for delta in ladder {
            let cfg = SchmittConfig::hysteresis(b, delta, InitialState::Neutral).unwrap();
            let labels = classify_rewards(&rewards, &cfg);
            let count = count_transitions(&labels);
            ensure(count <= prev, || {
                format!("trace {i}: {count} transitions at delta={delta} > {prev}")
            })?;
            prev = count;
            for t in 1..labels.len() {
                if labels[t] != labels[t - 1] {
                    let exit = cfg.band(rewards[t]);
                    ensure(exit != 0 && exit == labels[t], || {
                        format!("trace {i}, delta={delta}: transition at {t} without band exit")
                    })?;
                }
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} classifications monotone, all transitions at band exits"
    ))
}

fn bits_equal(a: &LossBreakdown, b: &LossBreakdown) -> bool {
    let same = |x: &[f64], y: &[f64]| {
        x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
    };
    a.loss.to_bits() == b.loss.to_bits()
        && same(&a.per_token_terms, &b.per_token_terms)
        && same(&a.grad_wrt_logprob_policy, &b.grad_wrt_logprob_policy)
        && a.masked_token_count == b.masked_token_count
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..100 {
        let pair = random_pair(&mut rng);
        let b = beta(&mut rng);
        let chosen = pair.chosen();
        let ones_c = MaskVector::ones(chosen.len());
        let ones_r = MaskVector::ones(pair.rejected().len());

        let plain = ObjectiveConfig::new(b, ObjectiveKind::Dpo).unwrap();
        let adaptive = ObjectiveConfig::new(b, ObjectiveKind::AdaptiveDpo).unwrap();
        ensure(
            bits_equal(
                &dpo_loss(&pair, &adaptive, Some((&ones_c, &ones_r))).unwrap(),
                &dpo_loss(&pair, &plain, None).unwrap(),
            ),
            || format!("instance {i}: adaptive dpo differs"),
        )?;

        let plain = ObjectiveConfig::new(b, ObjectiveKind::PpoObjective).unwrap();
        let adaptive = ObjectiveConfig::new(b, ObjectiveKind::AdaptivePpo).unwrap();
        ensure(
            bits_equal(
                &ppo_objective(chosen, &adaptive, Some(&ones_c)).unwrap(),
                &ppo_objective(chosen, &plain, None).unwrap(),
            ),
            || format!("instance {i}: adaptive ppo differs"),
        )?;

        let plain = ObjectiveConfig::new(b, ObjectiveKind::RejectionSampling).unwrap();
        let adaptive = ObjectiveConfig::new(b, ObjectiveKind::AdaptiveRs).unwrap();
        ensure(
            bits_equal(
                &rejection_sampling_loss(chosen, &adaptive, Some(&ones_c)).unwrap(),
                &rejection_sampling_loss(chosen, &plain, None).unwrap(),
            ),
            || format!("instance {i}: adaptive rejection sampling differs"),
        )?;
    }
    Ok("100 instances x 3 objectives bit-identical".to_owned())
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let cfg = ObjectiveConfig::new(0.1, ObjectiveKind::Dpo).unwrap();
    let mut gaps = Vec::new();
    for seed in [7, 1, 2, 3, 4] {
        let task = SyntheticTaskConfig {
            vocab_size: 8,
            sequence_length: 32,
            poison_fraction: 0.2,
            num_pairs: 64,
            seed,
            ..SyntheticTaskConfig::default()
        };
        let (masked, unmasked) = poison_span_experiment(&task, &cfg, 0.1, 200).unwrap();
        let poison = (
            *masked.mean_logprob_poison.last().unwrap(),
            *unmasked.mean_logprob_poison.last().unwrap(),
        );
        let good = (
            *masked.mean_logprob_good.last().unwrap(),
            *unmasked.mean_logprob_good.last().unwrap(),
        );
        ensure(poison.0 < poison.1, || {
            format!(
                "seed {seed}: masked poison {:.4} not below unmasked {:.4}",
                poison.0, poison.1
            )
        })?;
        ensure(good.0 > good.1, || {
            format!(
                "seed {seed}: masked good {:.4} not above unmasked {:.4}",
                good.0, good.1
            )
        })?;
        gaps.push(format!(
            "{seed}:{:+.3}/{:+.3}",
            poison.0 - poison.1,
            good.0 - good.1
        ));
    }
    let took = within_time(start, Duration::from_secs(60))?;
    Ok(format!(
        "seeds (poison/good delta) {}, {took:.2?}",
        gaps.join(" ")
    ))
}

/// Piecewise-constant structure whose adjacent gaps satisfy
/// `gap^2 * min_len > 4 c^2`.
fn separable_segments(rng: &mut ChaCha8Rng, c: f64) -> Vec<(usize, f64)> {
    let k = rng.gen_range(1..=5);
    let lens: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=8)).collect();
    let min_len = *lens.iter().min().unwrap() as f64;
    let min_gap = 2.0 * c / min_len.sqrt();
    let mut level = rng.gen_range(-1.0..=1.0);
    lens.into_iter()
        .map(|len| {
            let seg = (len, level);
            let step = min_gap * rng.gen_range(1.05..=2.0) + 1e-3;
            level += if rng.gen_bool(0.5) { step } else { -step };
            seg
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut recovered = 0;
    for trial in 0..100 {
        let c = [0.1, 0.5, 1.0, 2.0][trial % 4];
        let segments = separable_segments(&mut rng, c);
        let min_len = segments.iter().map(|s| s.0).min().unwrap() as f64;
        for w in segments.windows(2) {
            let gap = w[1].1 - w[0].1;
            ensure(gap * gap * min_len > c * c, || {
                format!("trial {trial}: generator violated gap condition")
            })?;
        }
        let cfg = SimConfig::new(segments, 0.0, 1, trial as u64).unwrap();
        let (trace, truth) = generate_trace(&cfg, 0).unwrap();
        let (best, _) = optimal_segmentation(&trace, c, SegmentAggregate::Mean).unwrap();
        if best.starts() == truth.starts() {
            recovered += 1;
        }
    }
    ensure(recovered == 100, || format!("recovered {recovered}/100"))?;
    Ok("recovered 100/100".to_owned())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 optimal segmenter matches exhaustive search", criterion_1),
        ("2 token noise error follows sigma^2 N", criterion_2),
        (
            "3 analytic gradients match central differences",
            criterion_3,
        ),
        ("4 closed-form anchors", criterion_4),
        ("5 hysteresis transitions monotone in delta", criterion_5),
        (
            "6 all-ones masks reduce to unmasked objectives",
            criterion_6,
        ),
        (
            "7 sign-consistent masking isolates poison spans",
            criterion_7,
        ),
        ("8 zero-noise exact recovery", criterion_8),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
