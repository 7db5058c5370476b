use crate::error::Result;
use crate::sequence::BitSequence;
use crate::special::igamc;
use crate::suite::{TestKind, TestOptions, TestResult};

pub const MATRIX_SIZE: usize = 32;
pub const MATRIX_BITS: usize = MATRIX_SIZE * MATRIX_SIZE;
pub const MIN_MATRICES: usize = 38;

/// Probabilities of a random 32x32 GF(2) matrix having rank 32, 31 and at
/// most 30.
pub const RANK_PROBABILITIES: [f64; 3] = [0.2887880951538411, 0.5775761901732046, 0.13363571467295432];

/// Rank over GF(2) of a 32x32 matrix given as row bitmasks.
pub fn gf2_rank(mut rows: [u32; MATRIX_SIZE]) -> usize {
    let mut rank = 0;
    for col in 0..MATRIX_SIZE {
        let bit = 1u32 << (MATRIX_SIZE - 1 - col);
        let Some(pivot) = (rank..MATRIX_SIZE).find(|&r| rows[r] & bit != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let pivot_row = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && *row & bit != 0 {
                *row ^= pivot_row;
            }
        }
        rank += 1;
    }
    rank
}

/// Matrix `index` filled row by row from consecutive bits, first bit of a
/// row in the most significant position.
fn matrix_rows(seq: &BitSequence, index: usize) -> [u32; MATRIX_SIZE] {
    let base = index * MATRIX_BITS;
    std::array::from_fn(|r| (0..MATRIX_SIZE).fold(0u32, |acc, c| acc << 1 | seq.get(base + r * MATRIX_SIZE + c) as u32))
}

/// Counts of matrices with full rank, rank 31 and lower rank.
pub fn rank_class_counts(seq: &BitSequence) -> [u64; 3] {
    let mut counts = [0u64; 3];
    for m in 0..seq.len() / MATRIX_BITS {
        match gf2_rank(matrix_rows(seq, m)) {
            32 => counts[0] += 1,
            31 => counts[1] += 1,
            _ => counts[2] += 1,
        }
    }
    counts
}

pub fn rank_test(seq: &BitSequence, options: &TestOptions) -> Result<TestResult> {
    options.check_length(TestKind::Rank, seq)?;
    let matrices = (seq.len() / MATRIX_BITS) as f64;
    let chi2: f64 = rank_class_counts(seq)
        .iter()
        .zip(RANK_PROBABILITIES)
        .map(|(&c, p)| (c as f64 - matrices * p).powi(2) / (matrices * p))
        .sum();
    let p = igamc(1.0, chi2 / 2.0);
    Ok(TestResult::new(TestKind::Rank, vec![p], chi2, options.alpha))
}
