//! Seeded fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segrew_core::{PairSample, SampleClass, TokenRewardTrace};

/// Uniform `[-1, 1]` rewards of length `n`.
pub fn random_rewards(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

pub fn random_trace(n: usize, seed: u64) -> TokenRewardTrace {
    TokenRewardTrace::from_rewards(SampleClass::Chosen, &random_rewards(n, seed))
        .expect("finite rewards")
}

/// Pair of length-`n` traces with random log-probabilities in `[-4, -0.01]`.
pub fn random_pair(n: usize, seed: u64) -> PairSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lp = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-4.0..=-0.01)).collect()
    };
    let rewards = random_rewards(n, seed ^ 0x9e37_79b9);
    let chosen = TokenRewardTrace::from_rewards(SampleClass::Chosen, &rewards)
        .and_then(|t| t.with_logprobs(lp(&mut rng), lp(&mut rng)))
        .expect("valid chosen trace");
    let rejected = TokenRewardTrace::from_rewards(SampleClass::Rejected, &rewards)
        .and_then(|t| t.with_logprobs(lp(&mut rng), lp(&mut rng)))
        .expect("valid rejected trace");
    PairSample::new(chosen, rejected).expect("matched pair")
}
