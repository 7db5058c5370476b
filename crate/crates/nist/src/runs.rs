use crate::error::Result;
use crate::sequence::BitSequence;
use crate::special::{erfc, igamc};
use crate::suite::{TestKind, TestOptions, TestResult};

/// Total number of runs; returns p = 0 when the ones proportion is too far
/// from one half for the statistic to apply.
pub fn runs_test(seq: &BitSequence, options: &TestOptions) -> Result<TestResult> {
    options.check_length(TestKind::Runs, seq)?;
    let n = seq.len() as f64;
    let pi = seq.count_ones() as f64 / n;
    let changes = seq.iter().zip(seq.iter().skip(1)).filter(|(a, b)| a != b).count();
    let v_obs = (changes + 1) as f64;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return Ok(TestResult::new(TestKind::Runs, vec![0.0], v_obs, options.alpha));
    }
    let spread = pi * (1.0 - pi);
    let p = erfc((v_obs - 2.0 * n * spread).abs() / (2.0 * (2.0 * n).sqrt() * spread));
    Ok(TestResult::new(TestKind::Runs, vec![p], v_obs, options.alpha))
}

struct RunTier {
    block: usize,
    /// Longest-run value of the lowest class; values at or below it share it.
    lowest: usize,
    probabilities: &'static [f64],
}

const SHORT: RunTier = RunTier {
    block: 8,
    lowest: 1,
    probabilities: &[0.21484375, 0.3671875, 0.23046875, 0.1875],
};

const MEDIUM: RunTier = RunTier {
    block: 128,
    lowest: 4,
    probabilities: &[0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847],
};

const LONG: RunTier = RunTier {
    block: 10_000,
    lowest: 10,
    probabilities: &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
};

fn tier_for(n: usize) -> &'static RunTier {
    if n < 6272 {
        &SHORT
    } else if n < 750_000 {
        &MEDIUM
    } else {
        &LONG
    }
}

fn longest_ones(seq: &BitSequence, start: usize, len: usize) -> usize {
    let mut best = 0;
    let mut current = 0;
    for i in start..start + len {
        if seq.get(i) {
            current += 1;
            best = best.max(current);
        } else {
            current = 0;
        }
    }
    best
}

/// Class counts of the per-block longest run of ones.
pub fn longest_run_class_counts(seq: &BitSequence) -> Vec<u64> {
    let tier = tier_for(seq.len());
    let classes = tier.probabilities.len();
    let mut counts = vec![0u64; classes];
    for b in 0..seq.len() / tier.block {
        let run = longest_ones(seq, b * tier.block, tier.block);
        let class = run.clamp(tier.lowest, tier.lowest + classes - 1) - tier.lowest;
        counts[class] += 1;
    }
    counts
}

pub fn longest_run_test(seq: &BitSequence, options: &TestOptions) -> Result<TestResult> {
    options.check_length(TestKind::LongestRun, seq)?;
    let tier = tier_for(seq.len());
    let blocks = (seq.len() / tier.block) as f64;
    let counts = longest_run_class_counts(seq);
    let chi2: f64 = counts
        .iter()
        .zip(tier.probabilities)
        .map(|(&c, &p)| (c as f64 - blocks * p).powi(2) / (blocks * p))
        .sum();
    let degrees = (tier.probabilities.len() - 1) as f64;
    let p = igamc(degrees / 2.0, chi2 / 2.0);
    Ok(TestResult::new(TestKind::LongestRun, vec![p], chi2, options.alpha))
}
