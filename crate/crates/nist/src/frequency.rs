use crate::error::{Error, Result};
use crate::sequence::BitSequence;
use crate::special::{erfc, igamc};
use crate::suite::{TestKind, TestOptions, TestResult};

/// Monobit test on the ±1 partial sum of the whole sequence.
pub fn frequency_test(seq: &BitSequence, options: &TestOptions) -> Result<TestResult> {
    options.check_length(TestKind::Frequency, seq)?;
    let n = seq.len() as f64;
    let sum = 2.0 * seq.count_ones() as f64 - n;
    let s_obs = sum.abs() / n.sqrt();
    let p = erfc(s_obs / std::f64::consts::SQRT_2);
    Ok(TestResult::new(TestKind::Frequency, vec![p], s_obs, options.alpha))
}

/// Chi-square on the ones proportion of `⌊n / block_size⌋` disjoint blocks;
/// trailing bits are discarded.
pub fn block_frequency_test(seq: &BitSequence, block_size: usize, options: &TestOptions) -> Result<TestResult> {
    options.check_length(TestKind::BlockFrequency, seq)?;
    let min_block = if options.enforce_min_length { 20 } else { 1 };
    if block_size < min_block {
        return Err(Error::InvalidArgument(format!("block size {block_size} below {min_block}")));
    }
    let blocks = seq.len() / block_size;
    if blocks == 0 {
        return Err(Error::InvalidArgument(format!(
            "block size {block_size} exceeds sequence length {}",
            seq.len()
        )));
    }
    let m = block_size as f64;
    let chi2 = 4.0
        * m
        * (0..blocks)
            .map(|b| {
                let pi = seq.count_ones_in(b * block_size, block_size) as f64 / m;
                (pi - 0.5).powi(2)
            })
            .sum::<f64>();
    let p = igamc(blocks as f64 / 2.0, chi2 / 2.0);
    Ok(TestResult::new(TestKind::BlockFrequency, vec![p], chi2, options.alpha))
}
