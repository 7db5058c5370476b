use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sequence::BitSequence;
use crate::special::normal_cdf;
use crate::suite::{TestKind, TestOptions, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanDirection {
    Forward,
    Backward,
}

/// Largest absolute excursion of the ±1 random walk.
pub fn max_excursion(seq: &BitSequence, direction: ScanDirection) -> u64 {
    let step = |b: bool| if b { 1i64 } else { -1 };
    let mut sum = 0i64;
    let mut max = 0u64;
    let mut visit = |b: bool| {
        sum += step(b);
        max = max.max(sum.unsigned_abs());
    };
    match direction {
        ScanDirection::Forward => seq.iter().for_each(&mut visit),
        ScanDirection::Backward => seq.iter().rev().for_each(&mut visit),
    }
    max
}

/// p-value of a maximum excursion `z` over `n` steps. Summation bounds are
/// truncated toward zero.
pub fn excursion_p_value(n: usize, z: u64) -> f64 {
    let n_f = n as f64;
    let z_f = z as f64;
    let sqrt_n = n_f.sqrt();
    let ratio = n_f / z_f;
    let term = |lo: f64, hi: f64, a: i64, b: i64| -> f64 {
        ((lo.trunc() as i64)..=(hi.trunc() as i64))
            .map(|k| normal_cdf((4 * k + a) as f64 * z_f / sqrt_n) - normal_cdf((4 * k + b) as f64 * z_f / sqrt_n))
            .sum()
    };
    let first = term((-ratio + 1.0) / 4.0, (ratio - 1.0) / 4.0, 1, -1);
    let second = term((-ratio - 3.0) / 4.0, (ratio - 1.0) / 4.0, 3, 1);
    1.0 - first + second
}

pub fn cumulative_sums_test(seq: &BitSequence, direction: ScanDirection, options: &TestOptions) -> Result<TestResult> {
    let kind = match direction {
        ScanDirection::Forward => TestKind::CumulativeSumsForward,
        ScanDirection::Backward => TestKind::CumulativeSumsBackward,
    };
    options.check_length(kind, seq)?;
    let z = max_excursion(seq, direction);
    let p = excursion_p_value(seq.len(), z);
    Ok(TestResult::new(kind, vec![p], z as f64, options.alpha))
}
