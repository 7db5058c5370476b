//! Spectral test. The ±1 sequence is transformed with an FFT of length `n`
//! and the magnitudes of bins `0..n/2` (DC included) are compared with the
//! 95% peak threshold.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::Result;
use crate::sequence::BitSequence;
use crate::special::erfc;
use crate::suite::{TestKind, TestOptions, TestResult};

/// `sqrt(n ln 20)`: a random sequence has 95% of its peaks below this.
pub fn peak_threshold(n: usize) -> f64 {
    (n as f64 * 20f64.ln()).sqrt()
}

/// Magnitudes of the first `n / 2` DFT bins of the ±1 sequence.
pub fn half_spectrum(seq: &BitSequence) -> Vec<f64> {
    let n = seq.len();
    let mut buffer: Vec<Complex<f64>> = seq.iter().map(|b| Complex::new(if b { 1.0 } else { -1.0 }, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);
    buffer.iter().take(n / 2).map(|c| c.norm()).collect()
}

/// p-value for `below` observed peaks under the threshold out of `n / 2`.
pub fn peak_count_p_value(n: usize, below: usize) -> f64 {
    let n = n as f64;
    let expected = 0.95 * n / 2.0;
    let d = (below as f64 - expected) / (n * 0.95 * 0.05 / 4.0).sqrt();
    erfc(d.abs() / std::f64::consts::SQRT_2)
}

pub fn dft_test(seq: &BitSequence, options: &TestOptions) -> Result<TestResult> {
    options.check_length(TestKind::Fft, seq)?;
    let threshold = peak_threshold(seq.len());
    let below = half_spectrum(seq).into_iter().filter(|&m| m < threshold).count();
    let p = peak_count_p_value(seq.len(), below);
    Ok(TestResult::new(TestKind::Fft, vec![p], below as f64, options.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_magnitudes(bits: &[bool]) -> Vec<f64> {
        let n = bits.len();
        (0..n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, &b) in bits.iter().enumerate() {
                    let x = if b { 1.0 } else { -1.0 };
                    let angle = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                    re += x * angle.cos();
                    im += x * angle.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn spectrum_matches_direct_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for n in [10usize, 64, 1000, 1023] {
            let bits: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let fast = half_spectrum(&BitSequence::from_bits(bits.iter().copied()));
            for (a, b) in fast.iter().zip(naive_magnitudes(&bits)) {
                assert!((a - b).abs() < 1e-8 * n as f64);
            }
        }
    }

    #[test]
    fn short_example_peak_count() {
        // Magnitudes are 0, 2, 4.472, 2, 4.472 against a threshold of 5.473.
        let s = BitSequence::from_ascii("1001010011").unwrap();
        let r = dft_test(&s, &TestOptions::fixture()).unwrap();
        assert_eq!(r.statistic, 5.0);
        assert!((r.p_value() - 0.468160).abs() < 5e-7, "{}", r.p_value());
        // conversion step alone: four peaks below threshold
        assert!((peak_count_p_value(10, 4) - 0.029523).abs() < 5e-7);
    }

    #[test]
    fn square_wave_fails() {
        let s = BitSequence::from_bits((0..4096).map(|i| (i / 8) % 2 == 0));
        assert!(!dft_test(&s, &TestOptions::default()).unwrap().passed);
        let short = BitSequence::from_bits((0..999).map(|i| i % 3 == 0));
        assert!(dft_test(&short, &TestOptions::default()).is_err());
    }
}
